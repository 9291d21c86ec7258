"""Krylov basis construction: randomized, truncated and whitened Arnoldi."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .dense_core import EPS, lstsq_small, qr_small
from .errors import (
    BreakdownError,
    ConversionError,
    ParameterError,
    ShapeError,
    SingularFactorError,
    WhiteningError,
)
from .rand_qr import WhitenedBasis, default_breakdown_tol, rgs
from .sketching import SketchOperator


class LinearOperator:
    """Square linear map with a matvec counter.

    Wraps a dense array, a scipy sparse matrix, a scipy ``LinearOperator`` or
    a callable. ``count`` is incremented by the number of vectors applied.
    """

    def __init__(self, A, n: Optional[int] = None, rmatvec: Optional[Callable] = None):
        self.count = 0
        self._rmatvec = rmatvec
        self._dense = None
        self._mat = None
        if callable(A) and not hasattr(A, "shape"):
            if n is None:
                raise ParameterError("callable operators need n")
            self.n = int(n)
            self._mv = A
        else:
            if not hasattr(A, "shape"):
                A = np.asarray(A, dtype=np.float64)
            shape = A.shape
            if len(shape) != 2 or shape[0] != shape[1]:
                raise ShapeError(f"operator must be square, got shape {shape}")
            self.n = int(shape[0])
            if isinstance(A, np.ndarray):
                self._dense = self._mat = np.asarray(A, dtype=np.float64)
            elif sp.issparse(A):
                self._mat = sp.csr_array(A, dtype=np.float64)
            else:
                self._mat = A
            self._mv = self._mat.__matmul__
            if rmatvec is None:
                self._rmatvec = self._mat.T.__matmul__

    @property
    def shape(self):
        return (self.n, self.n)

    @property
    def matrix(self):
        """Underlying dense or sparse matrix, if any."""
        return self._mat

    def dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        if sp.issparse(self._mat):
            return self._mat.toarray()
        return self.matvec(np.eye(self.n), count=False)

    def matvec(self, x, count: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.n:
            raise ShapeError(f"operator of size {self.n} applied to {x.shape[0]} rows")
        if count:
            self.count += 1 if x.ndim == 1 else x.shape[1]
        if self._mat is None and x.ndim == 2:
            y = np.column_stack([self._mv(x[:, i]) for i in range(x.shape[1])]) if x.shape[1] else np.zeros_like(x)
        else:
            y = self._mv(x)
        return np.asarray(y, dtype=np.float64).reshape(x.shape)

    __call__ = matvec
    __matmul__ = matvec

    def rmatvec(self, x, count: bool = True) -> np.ndarray:
        if self._rmatvec is None:
            raise ParameterError("operator has no transpose apply")
        x = np.asarray(x, dtype=np.float64)
        if count:
            self.count += 1 if x.ndim == 1 else x.shape[1]
        return np.asarray(self._rmatvec(x), dtype=np.float64).reshape(x.shape)

    def norm_est(self) -> float:
        """Cheap upper-bound style estimate of ``||A||_2``."""
        if self._dense is not None:
            return float(np.linalg.norm(self._dense, 2)) if self.n <= 500 else float(np.linalg.norm(self._dense, 1))
        if sp.issparse(self._mat):
            return float(min(spla.norm(self._mat, 1), spla.norm(self._mat, np.inf)))
        x = np.random.default_rng(0).standard_normal(self.n)
        for _ in range(20):
            y = self.matvec(x, count=False)
            x = y / np.linalg.norm(y)
        return float(np.linalg.norm(self.matvec(x, count=False)))


def aslinearoperator(A, n: Optional[int] = None) -> LinearOperator:
    return A if isinstance(A, LinearOperator) else LinearOperator(A, n)


@dataclass
class RandArnoldiDecomp:
    """``A V[:, :m] = V G_ext`` with ``S = op(V)`` orthonormal.

    After a happy breakdown at step ``m`` the last column of ``V`` and ``S``
    and the last row of ``G_ext`` are zero.
    """

    V: np.ndarray
    S: np.ndarray
    G_ext: np.ndarray
    beta: Optional[float]
    op: SketchOperator
    breakdown: bool = False

    @property
    def m(self) -> int:
        return self.G_ext.shape[1]

    @property
    def G(self) -> np.ndarray:
        return self.G_ext[: self.m]

    @property
    def g_next(self) -> float:
        return float(self.G_ext[self.m, self.m - 1]) if self.m else 0.0

    def relation_residual(self, A) -> float:
        """``||A V_m - V_{m+1} G_ext||_F`` (one block of matvecs, not counted)."""
        A = aslinearoperator(A)
        m = self.m
        return float(np.linalg.norm(A.matvec(self.V[:, :m], count=False) - self.V @ self.G_ext))


@dataclass
class TruncatedArnoldiBasis:
    """``A W[:, :m] = W L_ext`` with ``L_ext`` banded upper Hessenberg."""

    W: np.ndarray
    L_ext: np.ndarray
    k: int
    beta: float
    breakdown: bool = False

    @property
    def m(self) -> int:
        return self.L_ext.shape[1]


@dataclass
class KrylovDecomposition:
    """``A W = W B + w_next z^T`` with no orthogonality requirement."""

    W: np.ndarray
    B: np.ndarray
    w_next: np.ndarray
    z: np.ndarray

    def relation_residual(self, A) -> float:
        A = aslinearoperator(A)
        R = A.matvec(self.W, count=False) - self.W @ self.B - np.outer(self.w_next, self.z)
        return float(np.linalg.norm(R))


@dataclass
class WhitenedArnoldi:
    """Whitened sketched Arnoldi relation built from a truncated basis.

    ``basis`` holds ``W_m`` and the QR of its sketch; the implicit basis
    ``V_m = W_m R_m^{-1}`` satisfies ``A V_m = V_m G + v_hat l e_m^T / rho_m``
    where ``v_hat = w_{m+1} - W_m z``. ``basis_ext`` covers ``W_{m+1}``.
    """

    basis: WhitenedBasis
    basis_ext: Optional[WhitenedBasis]
    G_ext: np.ndarray
    beta: float
    z: np.ndarray
    rho_m: float
    v_hat: np.ndarray
    info: dict = field(default_factory=dict)

    @property
    def G(self) -> np.ndarray:
        return self.G_ext[:-1]


def extend_rand_arnoldi(
    A: LinearOperator,
    V: np.ndarray,
    S: np.ndarray,
    G_ext: np.ndarray,
    start: int,
    stop: int,
    op: SketchOperator,
    lstsq: str = "pivoted",
    breakdown_tol: Optional[float] = None,
    locked: Optional[tuple] = None,
    X: Optional[np.ndarray] = None,
) -> int:
    """Run randomized Arnoldi steps ``start .. stop-1`` in place.

    ``V`` and ``S`` need ``stop + 1`` columns with the first ``start + 1``
    filled; ``G_ext`` needs shape ``(stop + 1, stop)``. With ``locked =
    (Qc, Sc)`` each new vector is also sketch-orthogonalized against the
    locked basis and those coefficients are written to ``X``.

    Returns the final length (smaller than ``stop`` after a happy breakdown).
    """
    n = V.shape[0]
    tol = default_breakdown_tol(n) if breakdown_tol is None else breakdown_tol
    nc = 0
    if locked is not None:
        Qc, Sc = locked
        nc = Qc.shape[1]
    for j in range(start, stop):
        w = A.matvec(V[:, j])
        p = op.apply(w)
        if nc:
            Bq = np.hstack([Qc, V[:, : j + 1]])
            Bs = np.hstack([Sc, S[:, : j + 1]])
        else:
            Bq, Bs = V[:, : j + 1], S[:, : j + 1]
        coeffs = Bs.T @ p if lstsq == "transpose" else lstsq_small(Bs, p)
        w = w - Bq @ coeffs
        s = op.apply(w)
        g = np.linalg.norm(s)
        if nc:
            X[:, j] = coeffs[:nc]
        G_ext[: j + 1, j] = coeffs[nc:]
        G_ext[j + 2 :, j] = 0.0
        pn = np.linalg.norm(p)
        if g <= tol * pn or g == 0.0:
            G_ext[j + 1, j] = 0.0
            V[:, j + 1] = 0.0
            S[:, j + 1] = 0.0
            return j + 1
        G_ext[j + 1, j] = g
        V[:, j + 1] = w / g
        S[:, j + 1] = s / g
    return stop


def _start_vector(b, op: SketchOperator):
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1:
        raise ShapeError("starting vector must be 1-D")
    p = op.apply(b)
    beta = float(np.linalg.norm(p))
    if beta == 0.0:
        raise ParameterError("starting vector is zero (or in the kernel of the sketch)")
    return b / beta, p / beta, beta


def rand_arnoldi(
    A,
    b,
    m: int,
    op: SketchOperator,
    lstsq: str = "pivoted",
    breakdown_tol: Optional[float] = None,
) -> RandArnoldiDecomp:
    """Randomized Arnoldi: ``m`` steps with sketch-orthonormal basis vectors.

    A happy breakdown returns a shorter decomposition with ``breakdown=True``.
    """
    A = aslinearoperator(A)
    if m < 1:
        raise ParameterError(f"m must be positive, got {m}")
    if op.n != A.n:
        raise ShapeError(f"sketch input size {op.n} does not match operator size {A.n}")
    if m > A.n:
        raise ParameterError(f"m = {m} exceeds the dimension {A.n}")
    # at m = n the space is exhausted and step n breaks down, so l = n suffices
    need = min(m + 1, A.n)
    if op.output_dim < need:
        raise ParameterError(f"sketch size {op.output_dim} must be at least {need}")
    V = np.zeros((A.n, m + 1), order="F")
    S = np.zeros((op.output_dim, m + 1), order="F")
    H = np.zeros((m + 1, m))
    V[:, 0], S[:, 0], beta = _start_vector(b, op)
    mm = extend_rand_arnoldi(A, V, S, H, 0, m, op, lstsq, breakdown_tol)
    return RandArnoldiDecomp(V[:, : mm + 1].copy(), S[:, : mm + 1].copy(), H[: mm + 1, :mm].copy(), beta, op, mm < m)


def continue_rand_arnoldi(A, dec: RandArnoldiDecomp, m: int, lstsq: str = "pivoted", breakdown_tol=None) -> RandArnoldiDecomp:
    """Extend a decomposition to length ``m`` (a no-op after breakdown)."""
    A = aslinearoperator(A)
    k = dec.m
    if dec.breakdown or m <= k:
        return dec
    V = np.zeros((A.n, m + 1), order="F")
    S = np.zeros((dec.op.output_dim, m + 1), order="F")
    H = np.zeros((m + 1, m))
    V[:, : k + 1] = dec.V
    S[:, : k + 1] = dec.S
    H[: k + 1, :k] = dec.G_ext
    mm = extend_rand_arnoldi(A, V, S, H, k, m, dec.op, lstsq, breakdown_tol)
    return RandArnoldiDecomp(V[:, : mm + 1].copy(), S[:, : mm + 1].copy(), H[: mm + 1, :mm].copy(), dec.beta, dec.op, mm < m)


def truncated_arnoldi(A, b, m: int, k: int, breakdown_tol: Optional[float] = None) -> TruncatedArnoldiBasis:
    """Arnoldi with modified Gram-Schmidt against the last ``k`` vectors only.

    ``k >= m`` gives the full Arnoldi process.
    """
    A = aslinearoperator(A)
    if k < 1 or m < 1:
        raise ParameterError(f"need m >= 1 and k >= 1, got m={m}, k={k}")
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (A.n,):
        raise ShapeError(f"starting vector must have length {A.n}")
    beta = float(np.linalg.norm(b))
    if beta == 0.0:
        raise ParameterError("starting vector is zero")
    tol = default_breakdown_tol(A.n) if breakdown_tol is None else breakdown_tol
    W = np.zeros((A.n, m + 1), order="F")
    L = np.zeros((m + 1, m))
    W[:, 0] = b / beta
    for j in range(m):
        w = A.matvec(W[:, j])
        wn = np.linalg.norm(w)
        for i in range(max(0, j - k + 1), j + 1):
            h = W[:, i] @ w
            L[i, j] = h
            w -= h * W[:, i]
        h = np.linalg.norm(w)
        if h <= tol * wn or h == 0.0:
            return TruncatedArnoldiBasis(W[:, : j + 2].copy(), L[: j + 2, : j + 1].copy(), k, beta, True)
        L[j + 1, j] = h
        W[:, j + 1] = w / h
    return TruncatedArnoldiBasis(W, L, k, beta, False)


def arnoldi(A, b, m: int, breakdown_tol: Optional[float] = None) -> TruncatedArnoldiBasis:
    """Deterministic Arnoldi with full modified Gram-Schmidt."""
    return truncated_arnoldi(A, b, m, m, breakdown_tol)


def whitened_arnoldi(T: TruncatedArnoldiBasis, op: SketchOperator, rank_tol: Optional[float] = None) -> WhitenedArnoldi:
    """Turn a truncated Arnoldi relation into a sketched Arnoldi relation.

    Only the sketch of ``W_{m+1}`` is factorized, ``op(W_{m+1}) = S R``.
    With ``R = [[R_m, r], [0, rho_next]]`` and ``rho_m = R_m[-1, -1]`` the
    projected matrix is ``R_m L_m R_m^{-1} + (l / rho_m) r e_m^T`` and the
    next subdiagonal entry is ``rho_next * l / rho_m``, where ``l`` is the
    last subdiagonal entry of the truncated Hessenberg matrix.
    """
    m = T.m
    lsub = float(T.L_ext[m, m - 1])
    cols = m if T.breakdown else m + 1
    P = op.apply(T.W[:, :cols])
    try:
        Sq, R = qr_small(P, rank_tol)
    except SingularFactorError as exc:
        Rr = np.linalg.qr(P, mode="r")
        raise WhiteningError(
            f"sketched Krylov basis is rank deficient at column {exc.index}", exc.index, float(np.linalg.cond(Rr))
        ) from exc
    Rm = R[:m, :m]
    Lm = T.L_ext[:m, :m]
    rho_m = float(Rm[m - 1, m - 1])
    G_ext = np.zeros((m + 1, m))
    G = sla.solve_triangular(Rm, (Rm @ Lm).T, trans="T").T
    if T.breakdown:
        r = np.zeros(m)
        z = np.zeros(m)
        rho_next = 0.0
        v_hat = np.zeros(T.W.shape[0])
        basis_ext = None
    else:
        r = R[:m, m]
        rho_next = float(R[m, m])
        G[:, m - 1] += (lsub / rho_m) * r
        z = sla.solve_triangular(Rm, r)
        v_hat = T.W[:, m] - T.W[:, :m] @ z
        basis_ext = WhitenedBasis(T.W, Sq, R, op)
        G_ext[m, m - 1] = rho_next * lsub / rho_m
    G_ext[:m] = G
    basis = WhitenedBasis(T.W[:, :m], Sq[:, :m], Rm, op)
    return WhitenedArnoldi(
        basis, basis_ext, G_ext, T.beta * float(Rm[0, 0]), z, rho_m, v_hat,
        info={"cond_R": float(np.linalg.cond(R)), "k": T.k},
    )


def _householder_to_last(c: np.ndarray):
    """Reflector ``H`` (as ``(u, tau)``) with ``H c = gamma e_m``."""
    m = c.size
    nc = np.linalg.norm(c)
    head = np.linalg.norm(c[:-1])
    if nc == 0.0 or head <= 1e2 * EPS * nc:
        return None, float(c[-1])
    sgn = 1.0 if c[-1] >= 0 else -1.0
    u = c.copy()
    u[-1] += sgn * nc
    tau = 2.0 / (u @ u)
    return (u, tau), -sgn * nc


def krylov_to_rand_arnoldi(K: KrylovDecomposition, op: SketchOperator, lstsq: str = "pivoted") -> RandArnoldiDecomp:
    """Convert ``A W = W B + w z^T`` into a randomized Arnoldi decomposition.

    See :func:`krylov_to_rand_arnoldi_map`, which also returns the change of
    coordinates.
    """
    return krylov_to_rand_arnoldi_map(K, op, lstsq)[0]


def krylov_to_rand_arnoldi_map(K: KrylovDecomposition, op: SketchOperator, lstsq: str = "pivoted"):
    """Convert ``A W = W B + w z^T`` into a randomized Arnoldi decomposition.

    The columns of ``[W, w]`` are sketch-orthonormalized by randomized
    Gram-Schmidt, which turns the relation into ``A Q = Q C + q c^T``. An
    orthogonal similarity on the small matrix then maps ``c`` to a multiple
    of the last unit vector and brings ``C`` to upper Hessenberg form with a
    nonnegative subdiagonal.

    Returns
    -------
    dec : RandArnoldiDecomp
    M : (m, m) array
        Change of coordinates with ``dec.V[:, :m] = K.W @ M``.
    """
    W = np.asarray(K.W, dtype=np.float64)
    n, m = W.shape
    B = np.asarray(K.B, dtype=np.float64)
    z = np.asarray(K.z, dtype=np.float64)
    w = np.asarray(K.w_next, dtype=np.float64)
    no_next = not np.any(w)
    if no_next and np.any(z):
        raise ConversionError("w_next is zero but z is not")
    try:
        F = rgs(W if no_next else np.column_stack([W, w]), op, lstsq)
    except (BreakdownError, SingularFactorError) as exc:
        raise ConversionError(f"Krylov basis lost rank under the sketch: {exc}") from exc
    R = F.R[:m, :m]
    Rinv_t_z = sla.solve_triangular(R, z, trans="T")
    C = sla.solve_triangular(R, (R @ B).T, trans="T").T
    if no_next:
        c = np.zeros(m)
        Q = np.column_stack([F.Q, np.zeros(n)])
        S = np.column_stack([F.S, np.zeros(op.output_dim)])
    else:
        r = F.R[:m, m]
        C += np.outer(r, Rinv_t_z)
        c = F.R[m, m] * Rinv_t_z
        Q, S = F.Q, F.S

    P = np.eye(m)
    refl, gamma = _householder_to_last(c)
    if refl is not None:
        u, tau = refl
        Hh = np.eye(m) - tau * np.outer(u, u)
        C = Hh @ C @ Hh
        P = Hh
    if m > 2:
        J = np.eye(m)[::-1]
        Hm, Qh = sla.hessenberg(J @ C.T @ J, calc_q=True)
        Pj = J @ Qh @ J
        C = J @ Hm.T @ J
        P = P @ Pj
    d = np.ones(m)
    d[m - 1] = -1.0 if gamma < 0 else 1.0
    for i in range(m - 2, -1, -1):
        sub = C[i + 1, i]
        d[i] = d[i + 1] * (-1.0 if sub < 0 else 1.0)
    C = d[:, None] * C * d[None, :]
    P = P * d[None, :]
    G_ext = np.zeros((m + 1, m))
    G_ext[:m] = np.triu(C, -1)
    G_ext[m, m - 1] = abs(gamma)
    Vm = Q[:, :m] @ P
    Sm = S[:, :m] @ P
    V = np.column_stack([Vm, Q[:, m] if gamma != 0.0 else np.zeros(n)])
    Sk = np.column_stack([Sm, S[:, m] if gamma != 0.0 else np.zeros(op.output_dim)])
    M = sla.solve_triangular(R, P)
    return RandArnoldiDecomp(V, Sk, G_ext, None, op, breakdown=bool(gamma == 0.0)), M
