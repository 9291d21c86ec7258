"""Restarted randomized Arnoldi eigensolvers.

Ritz pairs are extracted from the sketched Hessenberg matrix. Two restart
engines are provided: implicit restarting with exact shifts (``rira``) and a
Krylov-Schur restart with locking of converged Schur vectors (``rks``).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .dense_core import hessenberg_eig, lstsq_small, real_schur, schur_reorder
from .errors import ConversionError, CycleError, ParameterError, ReorderError
from .krylov import (
    KrylovDecomposition,
    LinearOperator,
    RandArnoldiDecomp,
    aslinearoperator,
    continue_rand_arnoldi,
    extend_rand_arnoldi,
    krylov_to_rand_arnoldi_map,
    rand_arnoldi,
)
from .rand_qr import default_breakdown_tol
from .sketching import SketchOperator, make_sketch, recommend_dim

log = logging.getLogger(__name__)

MODES = {
    "LM": "largest_modulus",
    "SM": "smallest_modulus",
    "LR": "largest_real",
    "SR": "smallest_real",
}


@dataclass(frozen=True)
class SpectrumTarget:
    """Which part of the spectrum is wanted, and how many eigenvalues."""

    mode: str
    k: int

    def __post_init__(self):
        mode = MODES.get(self.mode, self.mode)
        if mode not in MODES.values():
            raise ParameterError(f"unknown spectrum target {self.mode!r}")
        object.__setattr__(self, "mode", mode)
        if self.k < 1:
            raise ParameterError(f"k must be positive, got {self.k}")

    def key(self, values: np.ndarray) -> np.ndarray:
        """Sort key, smaller is more wanted."""
        if self.mode == "largest_modulus":
            return -np.abs(values)
        if self.mode == "smallest_modulus":
            return np.abs(values)
        if self.mode == "largest_real":
            return -values.real
        return values.real


def _pair_order(values: np.ndarray, target: SpectrumTarget) -> np.ndarray:
    """Indices sorted by ``target`` with each conjugate pair kept adjacent."""
    order = list(np.lexsort((-values.imag, target.key(values))))
    out = []
    used = np.zeros(values.size, dtype=bool)
    for i in order:
        if used[i]:
            continue
        used[i] = True
        out.append(i)
        if values[i].imag != 0.0:
            cand = [j for j in range(values.size) if not used[j] and values[j].imag != 0.0]
            if cand:
                j = min(cand, key=lambda j: abs(values[j] - np.conj(values[i])))
                used[j] = True
                out.append(j)
    return np.asarray(out, dtype=int)


def _wanted_count(values_sorted: np.ndarray, k: int) -> int:
    """Smallest count >= k that does not split a conjugate pair."""
    k = min(k, values_sorted.size)
    if 0 < k < values_sorted.size and values_sorted[k - 1].imag != 0.0:
        # odd position inside a pair: the partner follows immediately
        n_before = int(sum(1 for v in values_sorted[: k - 1] if v.imag != 0.0))
        if n_before % 2 == 0:
            return k + 1
    return k


@dataclass
class RitzSet:
    """Ritz pairs of a randomized Arnoldi decomposition, sorted by the target.

    ``coeffs[:, i]`` is the unit-norm eigenvector of ``G`` for
    ``values[i]``; the Ritz vector is ``V_m @ coeffs[:, i]``.
    ``sketched_residuals[i] = |g_{m+1,m}| |coeffs[m-1, i]|``.
    """

    values: np.ndarray
    coeffs: np.ndarray
    sketched_residuals: np.ndarray
    n_wanted: int
    target: SpectrumTarget

    @property
    def wanted(self) -> np.ndarray:
        mask = np.zeros(self.values.size, dtype=bool)
        mask[: self.n_wanted] = True
        return mask

    def vectors(self, V: np.ndarray, normalize: bool = True) -> np.ndarray:
        X = V[:, : self.coeffs.shape[0]] @ self.coeffs
        if normalize:
            X = X / np.linalg.norm(X, axis=0)
        return X


def rayleigh_ritz(dec: RandArnoldiDecomp, target: SpectrumTarget) -> RitzSet:
    """Sketched Rayleigh-Ritz extraction from ``G_m``."""
    if dec.m < 1:
        raise ParameterError("empty decomposition")
    vals, Y = hessenberg_eig(dec.G)
    idx = _pair_order(vals, target)
    vals, Y = vals[idx], Y[:, idx]
    res = abs(dec.g_next) * np.abs(Y[-1, :])
    return RitzSet(vals, Y, res, _wanted_count(vals, target.k), target)


# ---------------------------------------------------------------- shifted QR


def _givens(x, y):
    r = np.hypot(x, y)
    if r == 0.0:
        return 1.0, 0.0
    return x / r, y / r


def _rotate(H, Q, i, c, s):
    Rt = np.array([[c, s], [-s, c]])
    H[i : i + 2, :] = Rt @ H[i : i + 2, :]
    H[:, i : i + 2] = H[:, i : i + 2] @ Rt.T
    Q[:, i : i + 2] = Q[:, i : i + 2] @ Rt.T


def single_shift_step(H: np.ndarray, Q: np.ndarray, mu: float) -> None:
    """Implicit single-shift QR sweep on Hessenberg ``H``, accumulated in ``Q``."""
    m = H.shape[0]
    if m < 2:
        return
    x, y = H[0, 0] - mu, H[1, 0]
    for i in range(m - 1):
        c, s = _givens(x, y)
        _rotate(H, Q, i, c, s)
        if i > 0:
            H[i + 1, i - 1] = 0.0
        if i < m - 2:
            x, y = H[i + 1, i], H[i + 2, i]


def _house3(x):
    nx = np.linalg.norm(x)
    if nx == 0.0:
        return None
    v = x.copy()
    v[0] += (1.0 if x[0] >= 0 else -1.0) * nx
    return np.eye(x.size) - (2.0 / (v @ v)) * np.outer(v, v)


def double_shift_step(H: np.ndarray, Q: np.ndarray, s: float, t: float) -> None:
    """Francis double-shift sweep with shifts the roots of ``z^2 - s z + t``."""
    m = H.shape[0]
    if m < 3:
        M = H @ H - s * H + t * np.eye(m)
        Qm, _ = np.linalg.qr(M)
        H[:] = Qm.T @ H @ Qm
        Q[:] = Q @ Qm
        return
    x = H[0, 0] ** 2 + H[0, 1] * H[1, 0] - s * H[0, 0] + t
    y = H[1, 0] * (H[0, 0] + H[1, 1] - s)
    z = H[1, 0] * H[2, 1]
    for k in range(m - 2):
        P = _house3(np.array([x, y, z]))
        if P is not None:
            H[k : k + 3, :] = P @ H[k : k + 3, :]
            H[:, k : k + 3] = H[:, k : k + 3] @ P
            Q[:, k : k + 3] = Q[:, k : k + 3] @ P
        if k > 0:
            H[k + 1 :, k - 1] = 0.0
        x, y = H[k + 1, k], H[k + 2, k]
        if k < m - 3:
            z = H[k + 3, k]
    c, sn = _givens(x, y)
    _rotate(H, Q, m - 2, c, sn)
    H[m - 1, m - 3] = 0.0


def apply_shifts(G: np.ndarray, shifts: np.ndarray):
    """Apply exact shifts, pairing complex conjugates into double steps.

    Returns the transformed Hessenberg matrix and the accumulated orthogonal
    factor ``Q`` with ``H_new = Q^T G Q``.
    """
    H = np.array(G, dtype=np.float64)
    m = H.shape[0]
    Q = np.eye(m)
    i = 0
    shifts = list(shifts)
    while i < len(shifts):
        mu = shifts[i]
        if mu.imag != 0.0:
            double_shift_step(H, Q, 2.0 * mu.real, abs(mu) ** 2)
            i += 2
        else:
            single_shift_step(H, Q, mu.real)
            i += 1
    return np.triu(H, -1), Q


# ---------------------------------------------------------------- rIRA


def _reorthogonalize(r, V, S, op, lstsq="pivoted"):
    p = op.apply(r)
    coeffs = S.T @ p if lstsq == "transpose" else lstsq_small(S, p)
    r = r - V @ coeffs
    s = op.apply(r)
    return coeffs, r, s


def rira_cycle(
    dec: RandArnoldiDecomp,
    target: SpectrumTarget,
    op: SketchOperator,
    A,
    m: Optional[int] = None,
    truncate_only: bool = False,
):
    """One implicit restart: shift away unwanted Ritz values and re-extend.

    Returns the new decomposition of length ``m`` (default ``dec.m``). With
    ``truncate_only`` the length-``k`` decomposition after truncation is
    returned instead, which is useful for checking the truncated relation.
    """
    A = aslinearoperator(A)
    m = dec.m if m is None else m
    ritz = rayleigh_ritz(dec, target)
    k = ritz.n_wanted
    q = dec.m - k
    if q <= 0:
        return dec
    shifts = ritz.values[k:]
    try:
        Gp, Q = apply_shifts(dec.G, shifts)
    except (ValueError, np.linalg.LinAlgError) as exc:
        raise CycleError(f"shifted QR failed: {exc}") from exc
    mm = dec.m
    g = dec.g_next
    Vp = dec.V[:, :mm] @ Q[:, : k + 1]
    Sp = dec.S[:, :mm] @ Q[:, : k + 1]
    r = Vp[:, k] * Gp[k, k - 1] + dec.V[:, mm] * (g * Q[mm - 1, k - 1])
    V = np.zeros((A.n, m + 1), order="F")
    S = np.zeros((op.output_dim, m + 1), order="F")
    H = np.zeros((m + 1, m))
    V[:, :k] = Vp[:, :k]
    S[:, :k] = Sp[:, :k]
    H[:k, :k] = Gp[:k, :k]
    coeffs, r, s = _reorthogonalize(r, V[:, :k], S[:, :k], op)
    H[:k, k - 1] += coeffs
    beta = np.linalg.norm(s)
    if beta <= default_breakdown_tol(A.n) * max(np.linalg.norm(H[:k, :k]), 1e-300):
        return RandArnoldiDecomp(V[:, : k + 1].copy(), S[:, : k + 1].copy(), H[: k + 1, :k].copy(), dec.beta, op, True)
    H[k, k - 1] = beta
    V[:, k] = r / beta
    S[:, k] = s / beta
    if truncate_only:
        return RandArnoldiDecomp(V[:, : k + 1].copy(), S[:, : k + 1].copy(), H[: k + 1, :k].copy(), dec.beta, op)
    mm = extend_rand_arnoldi(A, V, S, H, k, m, op)
    return RandArnoldiDecomp(V[:, : mm + 1].copy(), S[:, : mm + 1].copy(), H[: mm + 1, :mm].copy(), dec.beta, op, mm < m)


# ---------------------------------------------------------------- rKS


@dataclass
class LockedSet:
    """Partial sketch-orthonormal Schur factorization ``A Q ~= Q T``.

    ``SE`` holds the sketches of the dropped residual columns so that
    ``op(A Q - Q T) = SE`` up to rounding.
    """

    Q: np.ndarray
    S: np.ndarray
    T: np.ndarray
    SE: np.ndarray

    @classmethod
    def empty(cls, n: int, l: int) -> "LockedSet":
        return cls(np.zeros((n, 0)), np.zeros((l, 0)), np.zeros((0, 0)), np.zeros((l, 0)))

    @property
    def size(self) -> int:
        return self.Q.shape[1]

    @property
    def eigvals(self) -> np.ndarray:
        return np.linalg.eigvals(self.T) if self.size else np.zeros(0, dtype=complex)


@dataclass
class RKSState:
    """Working state of the Krylov-Schur engine.

    ``A [Q_c, V_m] = [Q_c, V_{m+1}] [[T_c, X], [0, G_ext]] + [E, 0]``.
    """

    dec: RandArnoldiDecomp
    locked: LockedSet
    X: np.ndarray
    deflation_log: list = field(default_factory=list)

    def full_matrix(self) -> np.ndarray:
        nc, m = self.locked.size, self.dec.m
        H = np.zeros((nc + m, nc + m))
        H[:nc, :nc] = self.locked.T
        H[:nc, nc:] = self.X
        H[nc:, nc:] = self.dec.G
        return H


def deflate(
    locked: LockedSet,
    W: np.ndarray,
    SW: np.ndarray,
    T_new: np.ndarray,
    coupling: np.ndarray,
    SE_new: np.ndarray,
    op: Optional[SketchOperator] = None,
    dep_tol: float = 1e-8,
) -> LockedSet:
    """Append converged Schur vectors to the locked set.

    Parameters
    ----------
    W, SW : arrays
        New Schur vectors (n x j) and their sketches.
    T_new : (j, j) array
        Their quasi-triangular block.
    coupling : (nc, j) array
        ``A W = Q_c coupling + W T_new + E_new``.
    SE_new : (l, j) array
        Sketch of the dropped residual ``E_new``.
    op : SketchOperator, optional
        When given, the new vectors are re-sketched and checked against the
        locked basis; a candidate lying (numerically) in its span is rejected.
    """
    nc = locked.size
    j = W.shape[1]
    if op is not None and nc:
        C = locked.S.T @ op.apply(W)
        if np.linalg.norm(C) > dep_tol * max(1.0, np.linalg.norm(SW)):
            raise ConversionError("candidate is not sketch-orthogonal to the locked set")
    T = np.zeros((nc + j, nc + j))
    T[:nc, :nc] = locked.T
    T[:nc, nc:] = coupling
    T[nc:, nc:] = T_new
    return LockedSet(
        np.column_stack([locked.Q, W]),
        np.column_stack([locked.S, SW]),
        T,
        np.column_stack([locked.SE, SE_new]),
    )


def _schur_select(F, target: SpectrumTarget, want: int) -> np.ndarray:
    idx = _pair_order(F.eigvals, target)
    p = _wanted_count(F.eigvals[idx], want)
    mask = np.zeros(F.m, dtype=bool)
    mask[idx[:p]] = True
    return mask


def rks_cycle(
    state: RKSState,
    target: SpectrumTarget,
    op: SketchOperator,
    A,
    m: int,
    eta: float = 1e-10,
    lock: bool = True,
) -> RKSState:
    """One Krylov-Schur restart with locking.

    The active Hessenberg matrix is brought to real Schur form with the
    wanted eigenvalues leading. Leading Schur vectors whose sketched
    residual is at most ``eta`` are locked; the remaining wanted ones form a
    Krylov decomposition that is converted back to randomized Arnoldi form
    and extended so that locked plus active columns total ``m``.
    """
    A = aslinearoperator(A)
    dec = state.dec
    locked = state.locked
    nc = locked.size
    ma = dec.m
    want = target.k - nc
    if want <= 0:
        return state
    F = real_schur(dec.G)
    mask = _schur_select(F, target, want)
    p = int(mask.sum())
    if p >= ma:
        return state
    try:
        F = schur_reorder(F, mask)
    except ReorderError:
        # retry with a slightly larger selection, never splitting pairs
        idx = _pair_order(F.eigvals, target)
        p2 = _wanted_count(F.eigvals[idx], p + 1)
        mask = np.zeros(F.m, dtype=bool)
        mask[idx[:p2]] = True
        log.warning("Schur reordering failed, retrying with %d selected values", p2)
        F = schur_reorder(F, mask)
        p = p2
    U, T = F.Q, F.T
    g = dec.g_next
    z = g * U[ma - 1, :]
    Vm, Sm = dec.V[:, :ma], dec.S[:, :ma]
    vnext, snext = dec.V[:, ma], dec.S[:, ma]

    # count leading Schur vectors to lock, whole blocks only
    j = 0
    if lock:
        for start, size in F.blocks():
            if start >= p:
                break
            if np.max(np.abs(z[start : start + size])) <= eta:
                j = start + size
            else:
                break
    XU = state.X @ U if nc else np.zeros((0, ma))
    log_entry = None
    if j:
        Wl = Vm @ U[:, :j]
        Sl = Sm @ U[:, :j]
        locked = deflate(locked, Wl, Sl, T[:j, :j], XU[:, :j], np.outer(snext, z[:j]))
        log_entry = {"locked": j, "total": locked.size, "max_residual": float(np.max(np.abs(z[:j])))}
    if locked.size >= target.k or j >= p:
        # everything wanted is locked: keep an empty active space
        empty = RandArnoldiDecomp(np.zeros((A.n, 1)), np.zeros((op.output_dim, 1)), np.zeros((1, 0)), None, op, True)
        return RKSState(empty, locked, np.zeros((locked.size, 0)), state.deflation_log + ([log_entry] if log_entry else []))
    Wa = Vm @ U[:, j:p]
    K = KrylovDecomposition(Wa, T[j:p, j:p], vnext, z[j:p])
    coupling = np.vstack([XU[:, j:p], T[:j, j:p]]) if locked.size else np.zeros((0, p - j))
    new_dec, M = krylov_to_rand_arnoldi_map(K, op)
    X_act = coupling @ M
    pa = p - j
    m_act = m - locked.size
    if m_act <= pa or new_dec.breakdown:
        X = np.zeros((locked.size, new_dec.m))
        X[:, :pa] = X_act
        return RKSState(new_dec, locked, X, state.deflation_log + ([log_entry] if log_entry else []))
    V = np.zeros((A.n, m_act + 1), order="F")
    S = np.zeros((op.output_dim, m_act + 1), order="F")
    H = np.zeros((m_act + 1, m_act))
    X = np.zeros((locked.size, m_act))
    V[:, : pa + 1] = new_dec.V
    S[:, : pa + 1] = new_dec.S
    H[: pa + 1, :pa] = new_dec.G_ext
    X[:, :pa] = X_act
    lk = (locked.Q, locked.S) if locked.size else None
    mm = extend_rand_arnoldi(A, V, S, H, pa, m_act, op, locked=lk, X=X if locked.size else None)
    out = RandArnoldiDecomp(V[:, : mm + 1].copy(), S[:, : mm + 1].copy(), H[: mm + 1, :mm].copy(), None, op, mm < m_act)
    return RKSState(out, locked, X[:, :mm].copy(), state.deflation_log + ([log_entry] if log_entry else []))


# ---------------------------------------------------------------- driver


@dataclass
class EigReport:
    values: np.ndarray
    vectors: np.ndarray
    sketched_residuals: np.ndarray
    residual_history: list
    restarts: int
    matvecs: int
    converged: bool
    engine: str
    n_converged: int
    deflation_log: list = field(default_factory=list)
    locked: Optional[LockedSet] = None
    op: Optional[SketchOperator] = None


def _extract_rira(dec, target):
    ritz = rayleigh_ritz(dec, target)
    k = ritz.n_wanted
    X = ritz.vectors(dec.V)[:, :k]
    return ritz.values[:k], X, ritz.sketched_residuals[:k]


def _extract_rks(state: RKSState, target: SpectrumTarget):
    """Eigenpairs of the full block upper triangular projected matrix."""
    locked, dec = state.locked, state.dec
    nc, ma = locked.size, dec.m
    Hf = state.full_matrix()
    vals, Y = hessenberg_eig(Hf) if Hf.size else (np.zeros(0, complex), np.zeros((0, 0), complex))
    idx = _pair_order(vals, target)
    vals, Y = vals[idx], Y[:, idx]
    p = _wanted_count(vals, target.k)
    vals, Y = vals[:p], Y[:, :p]
    Z = np.column_stack([locked.Q, dec.V[:, :ma]]) if ma else locked.Q
    SZ = np.column_stack([locked.S, dec.S[:, :ma]]) if ma else locked.S
    resid_sketch = locked.SE @ Y[:nc]
    if ma:
        resid_sketch = resid_sketch + np.outer(dec.S[:, ma], dec.g_next * Y[nc + ma - 1])
    norms = np.linalg.norm(SZ @ Y, axis=0)
    res = np.linalg.norm(resid_sketch, axis=0) / norms
    X = Z @ Y
    X = X / np.linalg.norm(X, axis=0)
    return vals, X, res


def default_sketch(n: int, m: int, seed: int = 0, kind: str = "gaussian") -> SketchOperator:
    """Sketch sized for a basis of ``m + 1`` vectors, drawn once per solve."""
    return make_sketch(kind, n, recommend_dim(m + 1, kind, n), seed)


def solve_eigs(
    A,
    target: SpectrumTarget,
    m: Optional[int] = None,
    op: Optional[SketchOperator] = None,
    max_restarts: int = 200,
    tol: float = 1e-10,
    engine: str = "rks",
    v0: Optional[np.ndarray] = None,
    seed: int = 0,
    eta: Optional[float] = None,
) -> EigReport:
    """Restarted randomized Arnoldi eigensolver.

    Parameters
    ----------
    A : operator
    target : SpectrumTarget
    m : int, optional
        Basis length, default ``2 * k``.
    op : SketchOperator, optional
        Drawn once for the whole solve when omitted.
    tol : float
        Threshold on the sketched residuals ``||op(A x - lambda x)||`` with
        ``||op(x)|| = 1``.
    engine : {"rks", "rira"}
    eta : float, optional
        Locking threshold for ``rks``, default ``tol``.
    """
    A = aslinearoperator(A)
    n = A.n
    k = target.k
    m = 2 * k if m is None else m
    if not k < m:
        raise ParameterError(f"need k < m, got k={k}, m={m}")
    if engine not in ("rks", "rira"):
        raise ParameterError(f"unknown engine {engine!r}")
    if op is None:
        op = default_sketch(n, m, seed)
    if op.output_dim < m + 1:
        raise ParameterError(f"sketch size {op.output_dim} must be at least m + 1 = {m + 1}")
    eta = tol if eta is None else eta
    if v0 is None:
        v0 = np.random.default_rng(seed).standard_normal(n)
    count0 = A.count
    dec = rand_arnoldi(A, v0, m, op)
    hist = []
    restarts = 0
    if engine == "rira":
        while True:
            vals, X, res = _extract_rira(dec, target)
            hist.append(float(np.max(res)))
            if np.all(res <= tol) or dec.breakdown or restarts >= max_restarts:
                break
            dec = rira_cycle(dec, target, op, A, m)
            if dec.m < m and not dec.breakdown:
                dec = continue_rand_arnoldi(A, dec, m)
            restarts += 1
        report_locked, dlog = None, []
    else:
        state = RKSState(dec, LockedSet.empty(n, op.output_dim), np.zeros((0, dec.m)))
        while True:
            vals, X, res = _extract_rks(state, target)
            hist.append(float(np.max(res)))
            if np.all(res <= tol) or restarts >= max_restarts:
                break
            if state.dec.breakdown and state.dec.m == 0:
                break
            state = rks_cycle(state, target, op, A, m, eta=eta)
            restarts += 1
        report_locked, dlog = state.locked, state.deflation_log
    converged = bool(np.all(res <= tol))
    return EigReport(
        vals, X, res, hist, restarts, A.count - count0, converged, engine,
        int(np.sum(res <= tol)), dlog, report_locked, op,
    )
