"""Randomized QR factorizations.

Every factorization here returns ``W = Q R`` where the sketch ``op(Q)`` has
orthonormal columns. Q itself is only well conditioned, not orthonormal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .dense_core import EPS, lstsq_small, qr_small
from .errors import BreakdownError, ParameterError, ShapeError, SingularFactorError, WhiteningError
from .sketching import SketchOperator, wrap_psi


@dataclass(frozen=True)
class RandQRFactors:
    """``W = Q R`` with ``S = op(Q)`` orthonormal."""

    Q: np.ndarray
    S: np.ndarray
    R: np.ndarray
    op: SketchOperator


@dataclass(frozen=True)
class RHQRFactors:
    """Randomized Householder factors: ``W = (I - U T S_u^T Psi) [R; 0]``."""

    U: np.ndarray
    S_u: np.ndarray
    T: np.ndarray
    R: np.ndarray
    sigma: np.ndarray
    rho: np.ndarray
    psi: SketchOperator

    @property
    def m(self) -> int:
        return self.R.shape[0]

    @property
    def Q(self) -> np.ndarray:
        """The implied basis, first ``m`` columns of the reflector product."""
        return rhqr_apply_q(self, np.eye(self.m))


@dataclass(frozen=True)
class WhitenedBasis:
    """Basis ``W`` together with the QR ``op(W) = S_q R`` of its sketch.

    The sketch-orthonormal basis ``W R^{-1}`` is kept implicit.
    """

    W: np.ndarray
    S_q: np.ndarray
    R: np.ndarray
    op: SketchOperator

    def materialize(self) -> np.ndarray:
        return sla.solve_triangular(self.R, self.W.T, trans="T").T


def default_breakdown_tol(n: int) -> float:
    return 1e2 * EPS * np.sqrt(n)


def _check_input(W, op: SketchOperator) -> np.ndarray:
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ShapeError(f"W must be a matrix, got shape {W.shape}")
    if W.shape[0] != op.n:
        raise ShapeError(f"W has {W.shape[0]} rows, sketch expects {op.n}")
    if op.output_dim < W.shape[1]:
        raise ParameterError(f"sketch size {op.output_dim} is smaller than the column count {W.shape[1]}")
    return W


def project_step(w, p, Q, S, op: SketchOperator, lstsq: str = "pivoted"):
    """One randomized Gram-Schmidt step for a single long vector.

    Parameters
    ----------
    w : (n,) array
        Vector to orthogonalize.
    p : (l,) array
        Its sketch ``op(w)``.
    Q, S : arrays
        Current basis (n x j) and its sketch (l x j), possibly with j = 0.
    lstsq : {"pivoted", "transpose"}
        How the sketched least squares problem is solved. ``transpose`` uses
        ``S^T p`` and is faster but loses stability when S drifts from
        orthonormality.

    Returns
    -------
    coeffs : (j,) array
    w_new : (n,) array
        ``w - Q coeffs``, not normalized.
    s_new : (l,) array
        A fresh sketch of ``w_new``.
    """
    j = Q.shape[1]
    if j:
        coeffs = S.T @ p if lstsq == "transpose" else lstsq_small(S, p)
        w_new = w - Q @ coeffs
    else:
        coeffs = np.zeros(0)
        w_new = np.array(w, dtype=np.float64)
    # the second sketch is taken on the long vector, not updated as p - S coeffs
    return coeffs, w_new, op.apply(w_new)


def rand_cholesky_qr(W, op: SketchOperator, rank_tol: Optional[float] = None) -> RandQRFactors:
    """Randomized Cholesky QR: factor the sketch, then ``Q = W R^{-1}``."""
    W = _check_input(W, op)
    P = op.apply(W)
    S, R = qr_small(P, rank_tol)
    Q = sla.solve_triangular(R, W.T, trans="T").T
    return RandQRFactors(np.ascontiguousarray(Q), S, R, op)


def rgs(
    W,
    op: SketchOperator,
    lstsq: str = "pivoted",
    breakdown_tol: Optional[float] = None,
) -> RandQRFactors:
    """Randomized Gram-Schmidt, one column at a time.

    Each column is sketched, its coefficients obtained from a small least
    squares problem against the current sketch, the projection subtracted on
    the long vector, and the result sketched again to normalize it.

    Raises
    ------
    BreakdownError
        If the projected sketch norm is at most ``breakdown_tol`` times the
        sketch norm of the original column.
    """
    W = _check_input(W, op)
    n, m = W.shape
    tol = default_breakdown_tol(n) if breakdown_tol is None else breakdown_tol
    Q = np.zeros((n, m), order="F")
    S = np.zeros((op.output_dim, m), order="F")
    R = np.zeros((m, m))
    for j in range(m):
        w = W[:, j]
        p = op.apply(w)
        coeffs, w_new, s_new = project_step(w, p, Q[:, :j], S[:, :j], op, lstsq)
        rho = np.linalg.norm(s_new)
        if rho <= tol * np.linalg.norm(p) or rho == 0.0:
            raise BreakdownError(f"column {j} is numerically dependent on the previous ones", j)
        R[:j, j] = coeffs
        R[j, j] = rho
        Q[:, j] = w_new / rho
        S[:, j] = s_new / rho
    return RandQRFactors(np.ascontiguousarray(Q), np.ascontiguousarray(S), R, op)


def block_rgs(
    W,
    op: SketchOperator,
    b: int,
    lstsq: str = "pivoted",
    breakdown_tol: Optional[float] = None,
) -> RandQRFactors:
    """Block randomized Gram-Schmidt with blocks of ``b`` columns.

    Each block is projected against the current basis through one sketched
    least squares solve, then orthogonalized internally with :func:`rgs`.
    A trailing partial block is allowed.
    """
    if b < 1:
        raise ParameterError(f"block size must be positive, got {b}")
    if b == 1:
        return rgs(W, op, lstsq, breakdown_tol)
    W = _check_input(W, op)
    n, m = W.shape
    Q = np.zeros((n, m), order="F")
    S = np.zeros((op.output_dim, m), order="F")
    R = np.zeros((m, m))
    for start in range(0, m, b):
        stop = min(m, start + b)
        Wj = W[:, start:stop]
        if start:
            Z = op.apply(Wj)
            Sp = S[:, :start]
            C = Sp.T @ Z if lstsq == "transpose" else lstsq_small(Sp, Z)
            Wj = Wj - Q[:, :start] @ C
            R[:start, start:stop] = C
        try:
            F = rgs(Wj, op, lstsq, breakdown_tol)
        except BreakdownError as exc:
            raise BreakdownError(str(exc), start + exc.column) from exc
        Q[:, start:stop] = F.Q
        S[:, start:stop] = F.S
        R[start:stop, start:stop] = F.R
    return RandQRFactors(np.ascontiguousarray(Q), np.ascontiguousarray(S), R, op)


def rhqr(W, op_inner: SketchOperator, breakdown_tol: Optional[float] = None) -> RHQRFactors:
    """Left-looking randomized Householder QR.

    ``op_inner`` sketches the trailing ``n - m`` coordinates; the full sketch
    is ``Psi = [I_m 0; 0 op_inner]``.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ShapeError(f"W must be a matrix, got shape {W.shape}")
    n, m = W.shape
    if op_inner.n != n - m:
        raise ShapeError(f"inner sketch must act on {n - m} coordinates, got {op_inner.n}")
    psi = wrap_psi(op_inner, m)
    tol = default_breakdown_tol(n) if breakdown_tol is None else breakdown_tol
    lp = psi.output_dim
    U = np.zeros((n, m), order="F")
    Su = np.zeros((lp, m), order="F")
    T = np.zeros((m, m))
    R = np.zeros((m, m))
    sigma = np.zeros(m)
    rho = np.zeros(m)
    for j in range(m):
        w = np.array(W[:, j], dtype=np.float64)
        z = psi.apply(w)
        if j:
            # apply the transposed reflector product H_{j-1} ... H_1
            c = T[:j, :j].T @ (Su[:, :j].T @ z)
            w -= U[:, :j] @ c
            R[:j, j] = w[:j]
            w[:j] = 0.0
            z = psi.apply(w)
        nz = np.linalg.norm(z)
        if nz == 0.0 or nz <= tol * np.linalg.norm(W[:, j]):
            raise BreakdownError(f"column {j} lies in the kernel of the sketch past row {j}", j)
        sg = 1.0 if w[j] >= 0 else -1.0
        u = w
        u[j] += sg * nz
        s = z
        s[j] += sg * nz
        beta = 2.0 / (s @ s)
        if j:
            T[:j, j] = -beta * (T[:j, :j] @ (Su[:, :j].T @ s))
        T[j, j] = beta
        U[:, j] = u
        Su[:, j] = s
        R[j, j] = -sg * nz
        sigma[j] = sg
        rho[j] = nz
    return RHQRFactors(np.ascontiguousarray(U), np.ascontiguousarray(Su), T, R, sigma, rho, psi)


def rhqr_apply_q(F: RHQRFactors, X) -> np.ndarray:
    """Compute ``(I - U T S_u^T Psi) [X; 0]`` without forming an n x n matrix."""
    X = np.asarray(X, dtype=np.float64)
    vec = X.ndim == 1
    X2 = X.reshape(X.shape[0], -1)
    m = F.m
    if X2.shape[0] != m:
        raise ShapeError(f"X must have {m} rows, got {X2.shape[0]}")
    out = -(F.U @ (F.T @ (F.S_u[:m].T @ X2)))
    out[:m] += X2
    return out[:, 0] if vec else out


def whiten(W, op: SketchOperator, rank_tol: Optional[float] = None) -> WhitenedBasis:
    """Factor only the sketch ``op(W) = S_q R``; ``W`` is kept as is."""
    W = _check_input(W, op)
    P = op.apply(W)
    try:
        S_q, R = qr_small(P, rank_tol)
    except SingularFactorError as exc:
        Rr = np.linalg.qr(P, mode="r")
        cond = float(np.linalg.cond(Rr)) if np.all(np.isfinite(Rr)) else np.inf
        raise WhiteningError(f"sketched basis is rank deficient at column {exc.index}", exc.index, cond) from exc
    return WhitenedBasis(W, S_q, R, op)


def whitened_apply(B: WhitenedBasis, y) -> np.ndarray:
    """Return ``W R^{-1} y`` with one triangular solve and one product."""
    y = np.asarray(y, dtype=np.float64)
    if y.shape[0] != B.R.shape[0]:
        raise ShapeError(f"coefficient vector needs {B.R.shape[0]} rows, got {y.shape[0]}")
    d = np.abs(np.diag(B.R))
    if d.size and d.min() == 0.0:
        raise SingularFactorError("R is singular", int(np.argmin(d)))
    return B.W @ sla.solve_triangular(B.R, y)


def cgs(W) -> tuple:
    """Classical Gram-Schmidt, the unsketched baseline.

    Returns ``(Q, R)`` with ``R`` having a positive diagonal. No
    reorthogonalization is done, so ``Q`` loses orthogonality roughly like
    ``eps * cond(W)^2``.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2:
        raise ShapeError(f"W must be a matrix, got shape {W.shape}")
    n, m = W.shape
    Q = np.zeros((n, m))
    R = np.zeros((m, m))
    for j in range(m):
        w = W[:, j]
        R[:j, j] = Q[:, :j].T @ w
        w = w - Q[:, :j] @ R[:j, j]
        nw = np.linalg.norm(w)
        if nw == 0.0:
            raise BreakdownError(f"column {j} is linearly dependent on the previous ones", j)
        R[j, j] = nw
        Q[:, j] = w / nw
    return Q, R
