"""Sketched-and-truncated projection for ``A X + X B = C1 C2^T``.

Two block Krylov bases, ``K_m(A, C1)`` and ``K_m(B^T, C2)``, are built with
truncated block Arnoldi and whitened through independent sketches. The
projected equation uses the corrected block Hessenberg matrices of the
whitened relations, and the solution is kept in factored form.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .dense_core import qr_small, sylvester_small
from .errors import BreakdownError, ParameterError, ShapeError, SingularFactorError, WhiteningError
from .krylov import LinearOperator, aslinearoperator
from .rand_qr import default_breakdown_tol
from .sketching import SketchOperator


@dataclass
class BlockArnoldiBasis:
    """``A W[:, :m r] = W H_ext`` with ``C = W[:, :r] beta``."""

    W: np.ndarray
    H_ext: np.ndarray
    beta: np.ndarray
    r: int
    k: int
    breakdown: bool = False

    @property
    def m(self) -> int:
        return self.H_ext.shape[1] // self.r


class _Transposed(LinearOperator):
    def __init__(self, base: LinearOperator):
        self.base = base
        self.n = base.n
        self.count = 0
        self._dense = self._mat = None
        self._rmatvec = base.matvec

    def matvec(self, x, count: bool = True):
        y = self.base.rmatvec(x, count=False)
        if count:
            self.count += 1 if np.ndim(x) == 1 else np.shape(x)[1]
        return y

    __call__ = matvec
    __matmul__ = matvec

    def rmatvec(self, x, count: bool = True):
        return self.base.matvec(x, count)


def block_truncated_arnoldi(A, C, m: int, k: int, breakdown_tol: Optional[float] = None) -> BlockArnoldiBasis:
    """Block Arnoldi, orthogonalizing each new block against the last ``k`` blocks.

    Block modified Gram-Schmidt inside the window, then a thin QR with a
    positive diagonal normalizes the block. A block that vanishes entirely is
    a happy breakdown (a zero block is stored); partial rank loss is an error
    since block deflation is not supported.
    """
    A = aslinearoperator(A)
    C = np.asarray(C, dtype=np.float64)
    if C.ndim == 1:
        C = C[:, None]
    n, r = C.shape
    if n != A.n:
        raise ShapeError(f"block has {n} rows, operator size {A.n}")
    if m < 1 or k < 1:
        raise ParameterError(f"need m >= 1 and k >= 1, got m={m}, k={k}")
    tol = default_breakdown_tol(n) if breakdown_tol is None else breakdown_tol
    try:
        W1, beta = qr_small(C)
    except SingularFactorError as exc:
        raise BreakdownError("starting block is rank deficient", exc.index) from exc
    W = np.zeros((n, (m + 1) * r), order="F")
    H = np.zeros(((m + 1) * r, m * r))
    W[:, :r] = W1
    for j in range(m):
        cj = slice(j * r, (j + 1) * r)
        Z = A.matvec(W[:, cj])
        zn = np.linalg.norm(Z)
        for i in range(max(0, j - k + 1), j + 1):
            ci = slice(i * r, (i + 1) * r)
            Hij = W[:, ci].T @ Z
            H[ci, cj] = Hij
            Z -= W[:, ci] @ Hij
        cn = slice((j + 1) * r, (j + 2) * r)
        # with full orthogonalization the space is exhausted once it has n columns
        full_space = (j + 1) * r >= n and k >= j + 1
        if full_space or np.linalg.norm(Z) <= tol * zn or zn == 0.0:
            return BlockArnoldiBasis(W[:, : (j + 2) * r].copy(), H[: (j + 2) * r, : (j + 1) * r].copy(), beta, r, k, True)
        try:
            Wn, Hn = qr_small(Z, rank_tol=tol)
        except SingularFactorError as exc:
            raise BreakdownError(f"block {j + 1} lost rank (block deflation unsupported)", j + 1) from exc
        W[:, cn] = Wn
        H[cn, cj] = Hn
    return BlockArnoldiBasis(W, H, beta, r, k, False)


@dataclass
class WhitenedBlockRelation:
    """Whitened block relation ``A V_m = V_m G + v_{m+1} g_next E_m^T``.

    ``op(W_{m+1}) = S T`` and ``V = W T^{-1}``. ``G = T_m H_m T_m^{-1} + G_hat
    E_m^T`` with ``G_hat = t_m h tau_m^{-1}``, where ``t_m`` is the trailing
    block column of ``T`` above the diagonal, ``h`` the last subdiagonal block
    of ``H`` and ``tau_m`` the last diagonal block of ``T_m``.
    """

    basis: BlockArnoldiBasis
    S: np.ndarray
    T: np.ndarray
    G: np.ndarray
    G_hat: np.ndarray
    g_next: np.ndarray
    op: SketchOperator


def whiten_block_relation(Bb: BlockArnoldiBasis, op: SketchOperator, side: str = "") -> WhitenedBlockRelation:
    m, r = Bb.m, Bb.r
    mr = m * r
    ncols = mr if Bb.breakdown else mr + r
    if op.output_dim < ncols:
        raise ParameterError(f"sketch size {op.output_dim} below block basis size {ncols} ({side} side)")
    P = op.apply(Bb.W[:, :ncols])
    try:
        S, T = qr_small(P)
    except SingularFactorError as exc:
        Rr = np.linalg.qr(P, mode="r")
        raise WhiteningError(
            f"whitening failed on the {side} side at column {exc.index}", exc.index, float(np.linalg.cond(Rr))
        ) from exc
    Tm = T[:mr, :mr]
    Hm = Bb.H_ext[:mr, :mr]
    G = sla.solve_triangular(Tm, (Tm @ Hm).T, trans="T").T
    if Bb.breakdown:
        G_hat = np.zeros((mr, r))
        g_next = np.zeros((r, r))
    else:
        h = Bb.H_ext[mr:, mr - r :]
        tau_m = Tm[mr - r :, mr - r :]
        tm = T[:mr, mr:]
        tau_next = T[mr:, mr:]
        # h tau_m^{-1} via a triangular solve from the right
        h_tinv = sla.solve_triangular(tau_m, h.T, trans="T").T
        G_hat = tm @ h_tinv
        G[:, mr - r :] += G_hat
        g_next = tau_next @ h_tinv
    return WhitenedBlockRelation(Bb, S, T, G, G_hat, g_next, op)


@dataclass
class SylvesterInstance:
    """``A X + X B = C1 C2^T``; ``B`` must support transpose products."""

    A: object
    B: object
    C1: np.ndarray
    C2: np.ndarray

    def __post_init__(self):
        self.A = aslinearoperator(self.A)
        self.B = aslinearoperator(self.B)
        self.C1 = np.atleast_2d(np.asarray(self.C1, dtype=np.float64).T).T
        self.C2 = np.atleast_2d(np.asarray(self.C2, dtype=np.float64).T).T
        if self.C1.shape != self.C2.shape or self.C1.shape[0] != self.A.n or self.B.n != self.A.n:
            raise ShapeError("inconsistent Sylvester instance dimensions")
        if self.C1.shape[1] < 1:
            raise ParameterError("rank r must be at least 1")

    @property
    def r(self) -> int:
        return self.C1.shape[1]

    def rhs_norm(self) -> float:
        # ||C1 C2^T||_F from the small Gram matrices
        return float(np.sqrt(max(np.sum((self.C1.T @ self.C1) * (self.C2.T @ self.C2)), 0.0)))


@dataclass
class LowRankSolution:
    """``X = left @ core @ right.T``.

    ``rel_A`` / ``rel_B`` hold the whitened block relations the solution was
    built from; they are used for factored residual evaluation.
    """

    left: np.ndarray
    core: np.ndarray
    right: np.ndarray
    Y: np.ndarray
    rel_A: Optional[WhitenedBlockRelation] = None
    rel_B: Optional[WhitenedBlockRelation] = None
    history: list = field(default_factory=list)

    def to_dense(self) -> np.ndarray:
        return self.left @ self.core @ self.right.T

    def apply(self, x) -> np.ndarray:
        return self.left @ (self.core @ (self.right.T @ x))


def sketched_sylvester(
    inst: SylvesterInstance,
    m: int,
    k: int,
    opA: SketchOperator,
    opB: SketchOperator,
) -> LowRankSolution:
    """Sketched-and-truncated Galerkin solution of a low-rank Sylvester equation."""
    r = inst.r
    BA = block_truncated_arnoldi(inst.A, inst.C1, m, k)
    BB = block_truncated_arnoldi(_Transposed(inst.B), inst.C2, m, k)
    # a breakdown on either side shortens both projections to the common length
    mm = min(BA.m, BB.m)
    BA, BB = _truncate(BA, mm), _truncate(BB, mm)
    relA = whiten_block_relation(BA, opA, "A")
    relB = whiten_block_relation(BB, opB, "B")
    mr = mm * r
    rhs = np.zeros((mr, mr))
    rhs[:r, :r] = (relA.T[:r, :r] @ BA.beta) @ (relB.T[:r, :r] @ BB.beta).T
    Y = sylvester_small(relA.G, relB.G.T, rhs)
    TA = relA.T[:mr, :mr]
    TB = relB.T[:mr, :mr]
    core = sla.solve_triangular(TA, Y)
    core = sla.solve_triangular(TB, core.T).T
    return LowRankSolution(BA.W[:, :mr], core, BB.W[:, :mr], Y, relA, relB)


def _truncate(Bb: BlockArnoldiBasis, m: int) -> BlockArnoldiBasis:
    if m == Bb.m:
        return Bb
    r = Bb.r
    return BlockArnoldiBasis(Bb.W[:, : (m + 1) * r], Bb.H_ext[: (m + 1) * r, : m * r], Bb.beta, r, Bb.k, False)


def _residual_small(inst: SylvesterInstance, sol: LowRankSolution):
    """Small matrix ``M`` with residual ``W^A_{m+1} M (W^B_{m+1})^T``."""
    BA, BB = sol.rel_A.basis, sol.rel_B.basis
    r = inst.r
    mr = sol.core.shape[0]
    pa, pb = BA.W.shape[1], BB.W.shape[1]
    M = BA.H_ext[:pa, :mr] @ sol.core @ np.eye(pb, mr).T + np.eye(pa, mr) @ sol.core @ BB.H_ext[:pb, :mr].T
    M[:r, :r] -= BA.beta @ BB.beta.T
    return M


def sylvester_residual(inst: SylvesterInstance, sol: LowRankSolution, method: str = "factored") -> float:
    """Frobenius norm of ``A X + X B - C1 C2^T``.

    ``factored`` reduces the residual to ``W^A_{m+1} M (W^B_{m+1})^T`` with
    the block Arnoldi relations and takes the norm through thin QR factors of
    the two bases, so no n x n matrix is formed. ``explicit`` forms the
    residual densely and is meant for small tests only.
    """
    if method == "explicit":
        X = sol.to_dense()
        A, B = inst.A, inst.B
        R = A.matvec(X, count=False) + B.rmatvec(X.T, count=False).T - inst.C1 @ inst.C2.T
        return float(np.linalg.norm(R))
    if sol.rel_A is None or sol.rel_B is None:
        raise ParameterError("factored residual needs the block relations of the solution")
    M = _residual_small(inst, sol)
    RA = np.linalg.qr(sol.rel_A.basis.W, mode="r")
    RB = np.linalg.qr(sol.rel_B.basis.W, mode="r")
    return float(np.linalg.norm(RA @ M @ RB.T))


def galerkin_certificate(inst: SylvesterInstance, sol: LowRankSolution) -> float:
    """``||(op_A V^A)^T op_A R op_B^T (op_B V^B)||_F`` for the residual ``R``.

    The residual is sketched in its factored form: both bases are sketched on
    the long vectors and combined with the small matrix ``M``.
    """
    relA, relB = sol.rel_A, sol.rel_B
    mr = sol.core.shape[0]
    M = _residual_small(inst, sol)
    SA = relA.op.apply(relA.basis.W)
    SB = relB.op.apply(relB.basis.W)
    # sketch-orthonormal V_m = W_m T_m^{-1}, so op(V_m) = op(W_m) T_m^{-1}
    SVA = sla.solve_triangular(relA.T[:mr, :mr], SA[:, :mr].T, trans="T").T
    SVB = sla.solve_triangular(relB.T[:mr, :mr], SB[:, :mr].T, trans="T").T
    return float(np.linalg.norm((SVA.T @ SA) @ M @ (SB.T @ SVB)))


def zero_solution(inst: SylvesterInstance, like: LowRankSolution) -> LowRankSolution:
    """Zero solution sharing the bases of ``like`` (for residual baselines)."""
    return LowRankSolution(like.left, np.zeros_like(like.core), like.right, np.zeros_like(like.Y), like.rel_A, like.rel_B)
