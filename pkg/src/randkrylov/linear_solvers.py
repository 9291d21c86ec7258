"""Sketched GMRES/FOM on randomized Arnoldi bases, plus deterministic baselines.

Both sketched solvers only touch the small extended Hessenberg matrix once
the basis is built: GMRES-type iterates minimize ``||beta e1 - G_ext y||``,
FOM-type iterates solve ``G y = beta e1``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .dense_core import lstsq_small
from .errors import ParameterError, SingularProjectionError
from .krylov import (
    RandArnoldiDecomp,
    aslinearoperator,
    arnoldi,
    rand_arnoldi,
    truncated_arnoldi,
    whitened_arnoldi,
)
from .rand_qr import whitened_apply
from .sketching import SketchOperator

# projected matrices with a larger condition number are treated as singular
SINGULAR_COND = 1e14


@dataclass
class SolveReport:
    x: np.ndarray
    y: np.ndarray
    sketched_residual_history: list
    true_residual_final: float
    iterations: int
    breakdown: bool
    matvecs: int
    converged: bool = False
    skipped: list = field(default_factory=list)
    method: str = ""
    basis_mode: str = "rgs_arnoldi"


def _parse_mode(basis_mode, k):
    if isinstance(basis_mode, (tuple, list)):
        basis_mode, k = basis_mode
    if basis_mode not in ("rgs_arnoldi", "whitened"):
        raise ParameterError(f"unknown basis mode {basis_mode!r}")
    if basis_mode == "whitened" and (k is None or k < 1):
        raise ParameterError("whitened mode needs a truncation depth k >= 1")
    return basis_mode, k


def _gmres_coeffs(G_ext: np.ndarray, beta: float, j: int):
    rhs = np.zeros(j + 1)
    rhs[0] = beta
    H = G_ext[: j + 1, :j]
    y = lstsq_small(H, rhs)
    return y, float(np.linalg.norm(rhs - H @ y))


def _fom_coeffs(G_ext: np.ndarray, beta: float, j: int):
    Gj = G_ext[:j, :j]
    if not np.all(np.isfinite(Gj)) or np.linalg.cond(Gj) > SINGULAR_COND:
        return None, np.inf
    rhs = np.zeros(j)
    rhs[0] = beta
    y = np.linalg.solve(Gj, rhs)
    return y, float(abs(G_ext[j, j - 1] * y[-1]))


def _projected_solve(G_ext, beta, m, rtol, kind):
    """Evaluate the projected iterates for lengths 1..m and stop at rtol."""
    hist, skipped = [], []
    best = None
    for j in range(1, m + 1):
        y, res = (_gmres_coeffs if kind == "gmres" else _fom_coeffs)(G_ext, beta, j)
        if y is None:
            skipped.append(j)
            hist.append(float("nan"))
            continue
        hist.append(res)
        best = (j, y, res)
        if res <= rtol * beta:
            return best, hist, skipped, True
    return best, hist, skipped, False


def _finish(A, b, basis_apply, best, hist, skipped, conv, breakdown, count0, method, mode):
    if best is None or (method.endswith("fom") and best[0] != len(hist) and not conv):
        raise SingularProjectionError(
            f"projected matrix is singular at length {len(hist)}",
            partial=None if best is None else _make_report(A, b, basis_apply, best, hist, skipped, False, breakdown, count0, method, mode),
        )
    return _make_report(A, b, basis_apply, best, hist, skipped, conv, breakdown, count0, method, mode)


def _make_report(A, b, basis_apply, best, hist, skipped, conv, breakdown, count0, method, mode):
    j, y, _ = best
    x = basis_apply(y)
    matvecs = A.count - count0
    true_res = float(np.linalg.norm(b - A.matvec(x, count=False)))
    return SolveReport(x, y, hist[:j], true_res, j, breakdown, matvecs, conv, [s for s in skipped if s <= j], method, mode)


def _run(A, b, m, op, basis_mode, k, rtol, kind, dec, lstsq):
    A = aslinearoperator(A)
    b = np.asarray(b, dtype=np.float64)
    mode, k = _parse_mode(basis_mode, k)
    count0 = A.count
    if mode == "rgs_arnoldi":
        if dec is None:
            dec = rand_arnoldi(A, b, m, op, lstsq=lstsq)
        G_ext, beta, mm, V = dec.G_ext, dec.beta, dec.m, dec.V
        apply = lambda y: V[:, : y.size] @ y  # noqa: E731
        breakdown = dec.breakdown
    else:
        T = truncated_arnoldi(A, b, m, k)
        wa = whitened_arnoldi(T, op)
        G_ext, beta, mm = wa.G_ext, wa.beta, T.m
        basis = wa.basis

        def apply(y):
            yy = np.zeros(mm)
            yy[: y.size] = y
            return whitened_apply(basis, yy)

        breakdown = T.breakdown
    best, hist, skipped, conv = _projected_solve(G_ext, beta, mm, rtol, kind)
    method = "rgmres" if kind == "gmres" else "rfom"
    return _finish(A, b, apply, best, hist, skipped, conv, breakdown, count0, method, mode)


def rgmres(
    A,
    b,
    m: int,
    op: SketchOperator,
    basis_mode: Union[str, tuple] = "rgs_arnoldi",
    k: Optional[int] = None,
    rtol: float = 1e-10,
    dec: Optional[RandArnoldiDecomp] = None,
    lstsq: str = "pivoted",
) -> SolveReport:
    """Sketched GMRES.

    Iterates minimize the sketched residual ``||beta e1 - G_ext y||`` over
    the Krylov space; the first length whose sketched residual drops below
    ``rtol * beta`` is returned, else length ``m``.

    :param basis_mode: ``"rgs_arnoldi"`` (explicit basis from randomized
        Arnoldi) or ``"whitened"`` (k-truncated Arnoldi with whitening); a
        ``("whitened", k)`` tuple is accepted too.
    :param dec: reuse an existing randomized Arnoldi decomposition.
    """
    return _run(A, b, m, op, basis_mode, k, rtol, "gmres", dec, lstsq)


def rfom(
    A,
    b,
    m: int,
    op: SketchOperator,
    basis_mode: Union[str, tuple] = "rgs_arnoldi",
    k: Optional[int] = None,
    rtol: float = 1e-10,
    dec: Optional[RandArnoldiDecomp] = None,
    lstsq: str = "pivoted",
) -> SolveReport:
    """Sketched FOM: solve ``G y = beta e1`` at each length.

    Lengths where ``G`` is numerically singular are skipped and listed in
    ``skipped``. A singular ``G`` at the final length raises
    :class:`SingularProjectionError` with the last valid report attached.
    """
    return _run(A, b, m, op, basis_mode, k, rtol, "fom", dec, lstsq)


def _baseline(A, b, m, rtol, kind):
    A = aslinearoperator(A)
    b = np.asarray(b, dtype=np.float64)
    count0 = A.count
    T = arnoldi(A, b, m)
    W = T.W
    best, hist, skipped, conv = _projected_solve(T.L_ext, T.beta, T.m, rtol, kind)
    method = "gmres" if kind == "gmres" else "fom"
    return _finish(A, b, lambda y: W[:, : y.size] @ y, best, hist, skipped, conv, T.breakdown, count0, method, "arnoldi")


def gmres_baseline(A, b, m: int, rtol: float = 1e-10) -> SolveReport:
    """GMRES on a full modified Gram-Schmidt Arnoldi basis."""
    return _baseline(A, b, m, rtol, "gmres")


def fom_baseline(A, b, m: int, rtol: float = 1e-10) -> SolveReport:
    """FOM on a full modified Gram-Schmidt Arnoldi basis."""
    return _baseline(A, b, m, rtol, "fom")


def sketched_residual(dec: RandArnoldiDecomp, y) -> float:
    """``||beta e1 - G_ext y||`` for a coefficient vector of length j <= m."""
    y = np.asarray(y, dtype=np.float64)
    j = y.size
    if j > dec.m:
        raise ParameterError(f"coefficient vector longer than the decomposition ({j} > {dec.m})")
    r = -(dec.G_ext[: j + 1, :j] @ y)
    r[0] += dec.beta
    return float(np.linalg.norm(r))


def spike_bound_factor(hist_gmres) -> np.ndarray:
    """``(1 - (r_k / r_{k-1})^2)^{-1/2}`` from a GMRES residual history.

    ``nan`` where the ratio is 1 (stagnation), starting at k = 1 with
    ``r_0 = beta`` prepended by the caller.
    """
    h = np.asarray(hist_gmres, dtype=np.float64)
    ratio = h[1:] / h[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 1.0 / np.sqrt(1.0 - ratio**2)
    out[ratio >= 1.0] = np.nan
    return out
