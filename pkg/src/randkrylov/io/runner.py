"""Dispatch an :class:`ExperimentConfig` to the numerical modules and build a report."""
from __future__ import annotations

import time
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .. import _backend
from ..eigensolver import SpectrumTarget, solve_eigs
from ..errors import ConfigError
from ..krylov import LinearOperator
from ..linear_solvers import fom_baseline, gmres_baseline, rfom, rgmres
from ..matrix_equations import SylvesterInstance, sketched_sylvester, sylvester_residual
from ..matrix_functions import FunctionSpec, MatFunTask, fab
from ..rand_qr import block_rgs, cgs, rand_cholesky_qr, rgs, rhqr, rhqr_apply_q, whiten
from ..sketching import SketchOperator, make_sketch, recommend_dim
from .config import ExperimentConfig
from .generators import GENERATORS, _rng
from .mmio import read_matrix_market
from .report import SCHEMA_VERSION, validate_report


class CountingSketch:
    """Proxy that counts how many vectors pass through a sketch operator."""

    def __init__(self, op: SketchOperator):
        self._op = op
        self.count = 0

    def __getattr__(self, name):
        return getattr(self._op, name)

    def apply(self, X):
        X = np.asarray(X)
        self.count += 1 if X.ndim == 1 else X.shape[1]
        return self._op.apply(X)

    def __matmul__(self, X):
        return self.apply(X)


def load_matrix(spec: dict):
    """Materialize the matrix described by a normalized matrix source."""
    if spec["source"] == "mm":
        return read_matrix_market(spec["path"])
    gen = GENERATORS[spec["generator"]]
    try:
        return gen(**spec["params"])
    except TypeError as exc:
        raise ConfigError(f"bad arguments for generator {spec['generator']!r}: {exc}") from None


def _build_sketch(spec: dict, n: int, cols: int) -> tuple:
    """Resolve ``l = "auto"`` and draw the operator; returns (spec, proxy)."""
    spec = dict(spec)
    if spec["l"] == "auto":
        spec["l"] = recommend_dim(cols, spec["kind"], n)
    if spec["kind"] == "s_hashing" and spec["s"] is None:
        spec["s"] = min(8, spec["l"])
    op = make_sketch(spec["kind"], n, spec["l"], seed=spec["seed"], s=spec["s"])
    return spec, CountingSketch(op)


def _rhs(kind: str, n: int, seed: int) -> np.ndarray:
    return np.ones(n) if kind == "ones" else _rng(seed).standard_normal(n)


def _dense(M) -> np.ndarray:
    return M.toarray() if sp.issparse(M) else np.asarray(M, dtype=np.float64)


def _task_qr(cfg: ExperimentConfig, M, echo):
    W = _dense(M)
    if W.ndim != 2:
        raise ConfigError("qr_bench needs a matrix")
    n, m = W.shape
    p = cfg.params
    alg = p["algorithm"]
    sk_n = n - m if alg == "rhqr" else n
    echo["sketch"], op = _build_sketch(cfg.sketch, sk_n, m)
    if alg == "rgs":
        F = rgs(W, op, lstsq=p["lstsq"])
        Q, R, meas = F.Q, F.R, op
    elif alg == "block_rgs":
        F = block_rgs(W, op, p["block_size"], lstsq=p["lstsq"])
        Q, R, meas = F.Q, F.R, op
    elif alg == "rand_cholesky_qr":
        F = rand_cholesky_qr(W, op)
        Q, R, meas = F.Q, F.R, op
    elif alg == "whiten":
        F = whiten(W, op)
        Q, R, meas = F.materialize(), F.R, op
    elif alg == "rhqr":
        F = rhqr(W, op)
        Q, R, meas = rhqr_apply_q(F, np.eye(m)), F.R, F.psi
    else:
        Q, R = cgs(W)
        meas = op
    SQ = meas.apply(Q)
    cq, cs, fe = [], [], []
    for j in range(1, m + 1):
        cq.append(float(np.linalg.cond(Q[:, :j])))
        cs.append(float(np.linalg.cond(SQ[:, :j])))
        Wj = W[:, :j]
        fe.append(float(np.linalg.norm(Q[:, :j] @ R[:j, :j] - Wj) / np.linalg.norm(Wj)))
    metrics = {"cond_Q": cq, "cond_sketch_Q": cs, "factorization_error": fe}
    final = {
        "cond_Q": cq[-1],
        "cond_sketch_Q": cs[-1],
        "factorization_error": fe[-1],
        "sketch_orthonormality": float(np.linalg.norm(SQ.T @ SQ - np.eye(m), 2)),
        "n": n,
        "m": m,
    }
    return metrics, final, [op], []


def _square(M, task: str) -> LinearOperator:
    A = LinearOperator(M)
    if M.shape[0] != M.shape[1]:
        raise ConfigError(f"{task} needs a square matrix, got shape {M.shape}")
    return A


def _task_linsolve(cfg: ExperimentConfig, M, echo):
    A = _square(M, "linsolve")
    p = cfg.params
    b = _rhs(p["rhs"], A.n, cfg.seed)
    echo["sketch"], op = _build_sketch(cfg.sketch, A.n, p["m"] + 1)
    if p["solver"] in ("rgmres", "rfom"):
        fn = rgmres if p["solver"] == "rgmres" else rfom
        rep = fn(A, b, p["m"], op, basis_mode=p["basis_mode"], k=p["k"], rtol=p["tol"])
    else:
        fn = gmres_baseline if p["solver"] == "gmres" else fom_baseline
        rep = fn(A, b, p["m"], rtol=p["tol"])
    bn = float(np.linalg.norm(b))
    metrics = {"residual_history": [float(v) for v in rep.sketched_residual_history]}
    final = {
        "true_residual": rep.true_residual_final,
        "relative_true_residual": rep.true_residual_final / bn,
        "iterations": rep.iterations,
        "converged": bool(rep.converged),
        "breakdown": bool(rep.breakdown),
        "skipped": list(rep.skipped),
    }
    return metrics, final, [op], [A]


def _task_eig(cfg: ExperimentConfig, M, echo):
    A = _square(M, "eig")
    p = cfg.params
    echo["sketch"], op = _build_sketch(cfg.sketch, A.n, p["m"] + 1)
    rep = solve_eigs(
        A, SpectrumTarget(p["target"], p["k"]), m=p["m"], op=op, max_restarts=p["max_restarts"],
        tol=p["tol"], engine=p["engine"], seed=cfg.seed, eta=p["eta"],
    )
    vals = np.asarray(rep.values)
    metrics = {"residual_history": [float(v) for v in rep.residual_history]}
    final = {
        "eigenvalues_real": [float(v) for v in vals.real],
        "eigenvalues_imag": [float(v) for v in np.imag(vals)],
        "sketched_residuals": [float(v) for v in rep.sketched_residuals],
        "restarts": int(rep.restarts),
        "converged": bool(rep.converged),
        "n_converged": int(rep.n_converged),
        "deflations": len(rep.deflation_log),
    }
    return metrics, final, [op], [A]


def _task_matfun(cfg: ExperimentConfig, M, echo):
    A = _square(M, "matfun")
    p = cfg.params
    f = FunctionSpec(p["f"]["name"], p["f"]["shift"], p["f"]["coeffs"])
    b = _rhs(p["rhs"], A.n, cfg.seed)
    grid = p["m_grid"]
    echo["sketch"], op = _build_sketch(cfg.sketch, A.n, max(grid) + 1)
    ref = None
    if p["reference"]:
        ref = f.matrix(_dense(M)) @ b
    errs, norms = [], []
    for m in grid:
        x = fab(MatFunTask(f, A, b, m, p["method"], p["k"], op))
        norms.append(float(np.linalg.norm(x)))
        errs.append(float(np.linalg.norm(x - ref) / np.linalg.norm(ref)) if ref is not None else None)
    metrics = {"m": list(grid), "relative_error": errs, "solution_norm": norms}
    final = {"relative_error": errs[-1], "solution_norm": norms[-1], "function": f.to_dict()}
    return metrics, final, [op], [A]


def _task_sylvester(cfg: ExperimentConfig, M, echo):
    A = _square(M, "sylvester")
    MB = M if cfg.matrix_B is None else load_matrix(cfg.matrix_B)
    B = _square(MB, "sylvester")
    if B.n != A.n:
        raise ConfigError(f"A and B must have the same size, got {A.n} and {B.n}")
    p = cfg.params
    rng = _rng(cfg.seed)
    C1 = rng.standard_normal((A.n, p["r"]))
    C2 = rng.standard_normal((A.n, p["r"]))
    inst = SylvesterInstance(A, B, C1, C2)
    grid = p["m_grid"]
    cols = p["r"] * (max(grid) + 1)
    echo["sketch"], opA = _build_sketch(cfg.sketch, A.n, cols)
    echo["sketch_B"], opB = _build_sketch(cfg.sketch_B, B.n, cols)
    res = []
    for m in grid:
        sol = sketched_sylvester(inst, m, p["k"], opA, opB)
        res.append(sylvester_residual(inst, sol, method=p["residual"]) / inst.rhs_norm())
    metrics = {"m": list(grid), "relative_residual": res}
    final = {"relative_residual": res[-1], "rank": int(sol.core.shape[0])}
    return metrics, final, [opA, opB], [A] if B is A else [A, B]


_TASKS: dict = {
    "qr_bench": _task_qr,
    "linsolve": _task_linsolve,
    "eig": _task_eig,
    "matfun": _task_matfun,
    "sylvester": _task_sylvester,
}


def _clean(x):
    """Replace non-finite floats by None so the report is strict JSON."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (float, np.floating)):
        return float(x) if np.isfinite(x) else None
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


def run(cfg: ExperimentConfig) -> dict:
    """Execute one experiment and return the validated report dictionary."""
    t0 = time.perf_counter()
    M = load_matrix(cfg.matrix)
    echo = cfg.to_dict()
    task: Callable = _TASKS[cfg.task]
    metrics, final, ops, linops = task(cfg, M, echo)
    counters = {
        "matvecs": int(sum(A.count for A in linops)),
        "sketch_applies": int(sum(op.count for op in ops)),
    }
    report = {
        "schema_version": SCHEMA_VERSION,
        "status": "ok",
        "task": cfg.task,
        "config": echo,
        "metrics": metrics,
        "final": final,
        "counters": counters,
        "environment": {"backend": _backend.BACKEND, "numpy": np.__version__},
        "timing": {"wall_time_s": time.perf_counter() - t0},
    }
    report = _clean(report)
    validate_report(report)
    return report
