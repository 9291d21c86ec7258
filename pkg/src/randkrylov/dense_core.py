"""Small dense kernels used on sketched and projected matrices.

Everything here works on matrices whose dimensions are of the order of the
Krylov or sketch size, so the heavy lifting is delegated to LAPACK through
numpy/scipy.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import (
    ConvergenceError,
    DomainError,
    ParameterError,
    ReorderError,
    ShapeError,
    SingularEquationError,
    SingularFactorError,
)

EPS = np.finfo(float).eps


def _as_finite(A, name: str = "A", ndim: int = 2) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != ndim:
        raise ShapeError(f"{name} must be {ndim}-dimensional, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ParameterError(f"{name} contains NaN or Inf")
    return A


def default_rank_tol(rows: int, cols: int) -> float:
    return 1e-12 * max(rows, cols)


def qr_small(A, rank_tol: Optional[float] = None):
    """Thin QR with a nonnegative diagonal of R.

    Raises
    ------
    SingularFactorError
        If some ``|R[j, j]| <= rank_tol * ||A||_2``; ``index`` is the first
        such column.
    """
    A = _as_finite(A)
    l, m = A.shape
    if l < m:
        raise ShapeError(f"qr_small needs rows >= cols, got {A.shape}")
    Q, R = np.linalg.qr(A, mode="reduced")
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    Q *= d
    R *= d[:, None]
    if rank_tol is None:
        rank_tol = default_rank_tol(l, m)
    if m:
        norm2 = np.linalg.norm(R, 2)
        bad = np.flatnonzero(np.abs(np.diag(R)) <= rank_tol * norm2)
        if bad.size:
            raise SingularFactorError(f"R is numerically singular at column {bad[0]}", int(bad[0]))
    return Q, R


def lstsq_small(A, b, rank_tol: Optional[float] = None, return_rank: bool = False):
    """Least squares ``argmin ||A x - b||`` by QR with column pivoting.

    ``b`` may be a vector or a matrix of right-hand sides. If the numerical
    rank falls below the column count, the minimum-norm solution on the
    detected rank is returned (and the rank reported when ``return_rank``).
    """
    A = _as_finite(A)
    b = np.asarray(b, dtype=np.float64)
    l, j = A.shape
    if l < j:
        raise ShapeError(f"lstsq_small needs rows >= cols, got {A.shape}")
    if b.shape[0] != l:
        raise ShapeError(f"right-hand side has {b.shape[0]} rows, expected {l}")
    if j == 0:
        x = np.zeros((0,) + b.shape[1:])
        return (x, 0) if return_rank else x
    if rank_tol is None:
        rank_tol = default_rank_tol(l, j)
    Q, R, piv = sla.qr(A, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rank_tol * diag[0])) if diag[0] > 0 else 0
    if rank == j:
        z = sla.solve_triangular(R, Q.T @ b)
        x = np.empty_like(z)
        x[piv] = z
    else:
        x = sla.lstsq(A, b, cond=rank_tol, lapack_driver="gelsy")[0]
    return (x, rank) if return_rank else x


@dataclass(frozen=True)
class RealSchurForm:
    """``A = Q T Q^T`` with ``T`` quasi upper triangular."""

    Q: np.ndarray
    T: np.ndarray
    eigvals: np.ndarray

    @property
    def m(self) -> int:
        return self.T.shape[0]

    def blocks(self) -> list:
        """Diagonal blocks as ``(start, size)`` pairs."""
        return _schur_blocks(self.T)


def _schur_blocks(T: np.ndarray) -> list:
    m = T.shape[0]
    out = []
    i = 0
    while i < m:
        if i + 1 < m and T[i + 1, i] != 0.0:
            out.append((i, 2))
            i += 2
        else:
            out.append((i, 1))
            i += 1
    return out


def _schur_eigvals(T: np.ndarray) -> np.ndarray:
    ev = np.empty(T.shape[0], dtype=complex)
    for i, size in _schur_blocks(T):
        if size == 1:
            ev[i] = T[i, i]
        else:
            a, b, c, d = T[i, i], T[i, i + 1], T[i + 1, i], T[i + 1, i + 1]
            p = 0.5 * (a + d)
            disc = 0.25 * (a - d) ** 2 + b * c
            im = np.sqrt(-disc) if disc < 0 else 0.0
            ev[i] = complex(p, im)
            ev[i + 1] = complex(p, -im)
    return ev


def real_schur(A) -> RealSchurForm:
    """Real Schur decomposition (Francis double-shift QR via LAPACK)."""
    A = _as_finite(A)
    m = A.shape[0]
    if m < 1 or A.shape[1] != m:
        raise ShapeError(f"real_schur needs a nonempty square matrix, got {A.shape}")
    try:
        T, Q = sla.schur(A, output="real")
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"Schur iteration did not converge: {exc}") from exc
    return RealSchurForm(Q, T, _schur_eigvals(T))


def _select_mask(F: RealSchurForm, select) -> np.ndarray:
    if callable(select):
        mask = np.array([bool(select(v)) for v in F.eigvals])
    else:
        mask = np.asarray(select, dtype=bool)
        if mask.shape != (F.m,):
            raise ShapeError(f"selection mask needs length {F.m}")
    for i, size in F.blocks():
        if size == 2 and mask[i] != mask[i + 1]:
            raise ParameterError(f"selection splits the conjugate pair at positions {i}, {i + 1}")
    return mask


def schur_reorder(F: RealSchurForm, select: Union[Callable[[complex], bool], Sequence[bool]]) -> RealSchurForm:
    """Move the selected eigenvalues to the leading diagonal blocks.

    ``select`` is a predicate on eigenvalues or a boolean mask over
    ``F.eigvals``. Conjugate pairs must be selected together.
    """
    mask = _select_mask(F, select)
    if mask.all() or not mask.any():
        return F
    ts, qs, wr, wi, _, _, _, info = lapack.dtrsen(mask.astype(np.int32), F.T, F.Q, job="N", wantq=1)
    if info == 1:
        raise ReorderError("adjacent diagonal blocks too close to swap", blocks=np.flatnonzero(mask))
    if info != 0:
        raise ReorderError(f"dtrsen failed with info={info}")
    return RealSchurForm(qs, ts, _schur_eigvals(ts))


def hessenberg_eig(G):
    """Eigenpairs of a small (Hessenberg) matrix.

    Returns
    -------
    values : complex ndarray (m,)
        Conjugate pairs are adjacent, positive imaginary part first.
    vectors : complex ndarray (m, m)
        Unit 2-norm right eigenvectors in the columns.
    """
    G = _as_finite(G)
    if G.shape[0] != G.shape[1]:
        raise ShapeError(f"square matrix required, got {G.shape}")
    try:
        w, Y = sla.eig(G, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigenvalue iteration did not converge: {exc}") from exc
    Y = Y / np.linalg.norm(Y, axis=0)
    return w.astype(complex), Y.astype(complex)


MATFUN_NAMES = ("exp", "inv", "invsqrt", "log", "resolvent", "polynomial")


def horner(G: np.ndarray, coeffs) -> np.ndarray:
    """Evaluate ``sum_j coeffs[j] G^j`` by Horner's rule."""
    m = G.shape[0]
    coeffs = np.asarray(coeffs, dtype=np.float64)
    P = np.zeros((m, m))
    I = np.eye(m)
    for c in coeffs[::-1]:
        P = P @ G + c * I
    return P


def _spectrum_check(G, name, t):
    ev = np.linalg.eigvals(G)
    scale = max(1.0, np.linalg.norm(G, 1))
    tol = 1e3 * EPS * scale
    if name == "inv":
        bad = ev[np.abs(ev) <= tol]
    elif name == "resolvent":
        bad = ev[np.abs(ev + t) <= tol]
    else:  # invsqrt, log: closed negative real axis including 0
        bad = ev[(ev.real <= tol) & (np.abs(ev.imag) <= tol)]
    if bad.size:
        raise DomainError(f"{name} undefined on eigenvalues {bad.tolist()}", eigenvalues=bad)


def _real_part(X: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(X):
        X = X.real
    return np.asarray(X, dtype=np.float64)


def matfun_small(G, f: str, t: float = 0.0, coeffs=None) -> np.ndarray:
    """Evaluate a matrix function on a small real matrix.

    Parameters
    ----------
    G : (m, m) array
    f : str
        ``exp`` (scaling and squaring with Padé approximants), ``inv`` (LU),
        ``invsqrt`` (inverse of the principal square root), ``log``
        (principal logarithm), ``resolvent`` giving ``(t I + G)^{-1}``, or
        ``polynomial`` giving ``sum_j coeffs[j] G^j`` by Horner's rule.
    t : float
        Shift for ``resolvent``.
    coeffs : sequence of float
        Polynomial coefficients in increasing degree.
    """
    G = _as_finite(G, "G")
    m = G.shape[0]
    if G.shape[1] != m:
        raise ShapeError(f"square matrix required, got {G.shape}")
    if f == "exp":
        return sla.expm(G)
    if f == "polynomial":
        if coeffs is None:
            raise ParameterError("polynomial needs coeffs")
        return horner(G, coeffs)
    if f not in MATFUN_NAMES:
        raise ParameterError(f"unknown matrix function {f!r}")
    _spectrum_check(G, f, t)
    if f == "inv":
        return sla.lu_solve(sla.lu_factor(G), np.eye(m))
    if f == "resolvent":
        return sla.lu_solve(sla.lu_factor(G + t * np.eye(m)), np.eye(m))
    if f == "invsqrt":
        S = _real_part(sla.sqrtm(G))
        return sla.lu_solve(sla.lu_factor(S), np.eye(m))
    return _real_part(sla.logm(G))


def sylvester_small(A, B, C, overlap_tol: float = 1e-12) -> np.ndarray:
    """Solve ``A X + X B = C`` by Bartels-Stewart.

    Raises
    ------
    SingularEquationError
        If an eigenvalue of ``A`` lies within ``overlap_tol`` (relative to
        ``||A|| + ||B||``) of an eigenvalue of ``-B``.
    """
    A = _as_finite(A, "A")
    B = _as_finite(B, "B")
    C = _as_finite(C, "C")
    p, q = A.shape[0], B.shape[0]
    if A.shape != (p, p) or B.shape != (q, q) or C.shape != (p, q):
        raise ShapeError(f"incompatible shapes A{A.shape}, B{B.shape}, C{C.shape}")
    ea = np.linalg.eigvals(A)
    eb = np.linalg.eigvals(B)
    gap = np.min(np.abs(ea[:, None] + eb[None, :]))
    scale = max(1.0, np.linalg.norm(A, 2) + np.linalg.norm(B, 2))
    if gap <= overlap_tol * scale:
        raise SingularEquationError(f"spectra of A and -B overlap (gap {gap:.3e})")
    return sla.solve_sylvester(A, B, C)
