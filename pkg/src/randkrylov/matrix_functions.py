"""Krylov approximations of f(A) b.

All methods project onto a Krylov space of length m and evaluate the
function on the small projected matrix:

* ``arnoldi``: orthonormal basis, ``beta Q_m f(H_m) e1``.
* ``sfom_explicit``: sketch-orthonormal basis from randomized Arnoldi.
* ``sfom_whitened``: truncated basis, whitened only through its sketch.
* ``corrected``: truncated basis with a least-squares rank-one correction,
  equal to the Arnoldi approximation in exact arithmetic.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.sparse.linalg import lsqr

from .dense_core import MATFUN_NAMES, matfun_small
from .errors import ParameterError
from .krylov import aslinearoperator, arnoldi, rand_arnoldi, truncated_arnoldi, whitened_arnoldi
from .rand_qr import whitened_apply
from .sketching import SketchOperator

METHODS = ("arnoldi", "sfom_explicit", "sfom_whitened", "corrected")


@dataclass(frozen=True)
class FunctionSpec:
    """A function selector for :func:`matfun_small`.

    ``name`` is one of ``exp``, ``inv``, ``invsqrt``, ``log``, ``resolvent``
    (``(shift + z)^{-1}``) or ``polynomial`` (``coeffs`` in increasing degree).
    """

    name: str
    shift: float = 0.0
    coeffs: Optional[tuple] = None

    def __post_init__(self):
        if self.name not in MATFUN_NAMES:
            raise ParameterError(f"unknown function {self.name!r}")
        if self.name == "polynomial":
            if self.coeffs is None or len(self.coeffs) == 0:
                raise ParameterError("polynomial needs coefficients")
            object.__setattr__(self, "coeffs", tuple(float(c) for c in self.coeffs))

    @classmethod
    def monomial(cls, j: int) -> "FunctionSpec":
        return cls("polynomial", coeffs=(0.0,) * j + (1.0,))

    def matrix(self, G: np.ndarray) -> np.ndarray:
        return matfun_small(G, self.name, t=self.shift, coeffs=self.coeffs)

    def to_dict(self) -> dict:
        return {"name": self.name, "shift": self.shift, "coeffs": list(self.coeffs) if self.coeffs else None}


def _as_spec(f) -> FunctionSpec:
    if isinstance(f, FunctionSpec):
        return f
    if isinstance(f, str):
        return FunctionSpec(f)
    if isinstance(f, dict):
        return FunctionSpec(f["name"], f.get("shift", 0.0), f.get("coeffs"))
    raise ParameterError(f"cannot interpret {f!r} as a function")


@dataclass
class MatFunTask:
    """Inputs of an f(A) b computation.

    ``k`` is the truncation depth for ``sfom_whitened`` and ``corrected``;
    ``op`` is needed by both sketched methods.
    """

    f: FunctionSpec
    A: object
    b: np.ndarray
    m: int
    method: str = "arnoldi"
    k: Optional[int] = None
    op: Optional[SketchOperator] = None

    def __post_init__(self):
        self.f = _as_spec(self.f)
        self.A = aslinearoperator(self.A)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.method not in METHODS:
            raise ParameterError(f"unknown method {self.method!r}")
        if self.m < 1:
            raise ParameterError(f"m must be positive, got {self.m}")


def _e1_column(F: np.ndarray, beta: float) -> np.ndarray:
    return beta * F[:, 0]


def fab_arnoldi(task: MatFunTask) -> np.ndarray:
    """``beta Q_m f(H_m) e1`` on the modified Gram-Schmidt Arnoldi basis."""
    T = arnoldi(task.A, task.b, task.m)
    m = T.m
    return T.W[:, :m] @ _e1_column(task.f.matrix(T.L_ext[:m, :m]), T.beta)


def fab_sfom(task: MatFunTask) -> np.ndarray:
    """``beta V_m f(G_m) e1`` with the randomized Arnoldi basis."""
    if task.op is None:
        raise ParameterError("sfom needs a sketch operator")
    dec = rand_arnoldi(task.A, task.b, task.m, task.op)
    return dec.V[:, : dec.m] @ _e1_column(task.f.matrix(dec.G), dec.beta)


def fab_sfom_whitened(task: MatFunTask) -> np.ndarray:
    """Whitened sFOM: ``W_m R_m^{-1} f(G_m) beta e1`` with ``V_m`` never formed."""
    if task.op is None or task.k is None:
        raise ParameterError("whitened sFOM needs a sketch operator and a truncation depth")
    T = truncated_arnoldi(task.A, task.b, task.m, task.k)
    wa = whitened_arnoldi(T, task.op)
    return whitened_apply(wa.basis, _e1_column(task.f.matrix(wa.G), wa.beta))


def fab_corrected(task: MatFunTask, return_info: bool = False):
    """Truncated basis with the rank-one correction ``f(L_m + h e_m^T l)``.

    ``h`` solves ``min ||W_m h - w_{m+1}||`` with LSQR on the long vectors
    (tolerance ``1e-12``, at most ``4 m`` iterations). Non-convergence is
    reported with a warning and the result is still returned.
    """
    if task.k is None:
        raise ParameterError("corrected method needs a truncation depth")
    T = truncated_arnoldi(task.A, task.b, task.m, task.k)
    m = T.m
    Wm = T.W[:, :m]
    L = T.L_ext[:m, :m].copy()
    info = {"lsqr_istop": None, "lsqr_iters": 0}
    if not T.breakdown:
        w = T.W[:, m]
        sol = lsqr(Wm, w, atol=1e-12, btol=1e-12, iter_lim=4 * m)
        h, istop, itn = sol[0], sol[1], sol[2]
        info.update(lsqr_istop=int(istop), lsqr_iters=int(itn))
        if istop not in (1, 2, 4, 5) and np.linalg.norm(w) > 0:
            warnings.warn(f"least-squares correction did not converge (istop={istop})", RuntimeWarning, stacklevel=2)
            info["flag"] = "lsqr_not_converged"
        L[:, m - 1] += h * T.L_ext[m, m - 1]
    x = Wm @ _e1_column(task.f.matrix(L), T.beta)
    return (x, info) if return_info else x


_DISPATCH = {
    "arnoldi": fab_arnoldi,
    "sfom_explicit": fab_sfom,
    "sfom_whitened": fab_sfom_whitened,
    "corrected": fab_corrected,
}


def fab(task: MatFunTask) -> np.ndarray:
    """Dispatch on ``task.method``."""
    return _DISPATCH[task.method](task)


def shifted_solves(A, b, shifts: Sequence[float], m: int, op: SketchOperator):
    """sFOM resolvent approximations ``(t I + A)^{-1} b`` on one shared basis."""
    dec = rand_arnoldi(A, b, m, op)
    Vm = dec.V[:, : dec.m]
    out = []
    for t in shifts:
        F = matfun_small(dec.G, "resolvent", t=t)
        out.append(Vm @ _e1_column(F, dec.beta))
    return out
