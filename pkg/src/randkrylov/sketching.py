"""Oblivious subspace embeddings.

Operators map R^n to R^l and are fully determined by ``(kind, n, l, s, seed)``.
Random draws use numpy's PCG64 bit generator seeded through ``SeedSequence``,
so the same descriptor reproduces the same operator on every platform.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import _backend
from .errors import ParameterError, ShapeError

KINDS = ("gaussian", "s_hashing", "srht", "identity", "psi_wrapped")

DEFAULT_GAUSSIAN_FACTOR = 20.0
DEFAULT_LOG_FACTOR = 5.5

# bound on the size of the uniform-key scratch array used when drawing
# s-hashing patterns
_HASH_CHUNK = 1 << 22


def _next_pow2(n: int) -> int:
    return 1 << max(0, (n - 1).bit_length())


def _rng(seed: int) -> np.random.Generator:
    if seed < 0 or seed >= 2**64:
        raise ParameterError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SketchOperator:
    """Immutable sketching operator.

    Attributes
    ----------
    kind : str
        One of ``gaussian``, ``s_hashing``, ``srht``, ``identity``,
        ``psi_wrapped``.
    n : int
        Input length.
    l : int
        Sketch length. For ``psi_wrapped`` this is the length of the inner
        sketch; the output has ``l + m_keep`` rows.
    seed : int
    s : int or None
        Nonzeros per column (s-hashing only).
    m_keep : int
        Leading coordinates copied verbatim (``psi_wrapped`` only).
    """

    kind: str
    n: int
    l: int
    seed: int = 0
    s: Optional[int] = None
    m_keep: int = 0
    _state: dict = field(default_factory=dict, repr=False)

    @property
    def output_dim(self) -> int:
        return self.l + self.m_keep if self.kind == "psi_wrapped" else self.l

    @property
    def inner(self) -> Optional["SketchOperator"]:
        return self._state.get("inner")

    @property
    def shape(self) -> tuple:
        return (self.output_dim, self.n)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Sketch a vector of length ``n`` or the columns of an ``n x k`` matrix."""
        X = np.asarray(X)
        vec = X.ndim == 1
        if X.ndim not in (1, 2):
            raise ShapeError(f"expected a vector or matrix, got ndim={X.ndim}")
        if X.shape[0] != self.n:
            raise ShapeError(f"operator expects {self.n} rows, got {X.shape[0]}")
        X2 = np.ascontiguousarray(X.reshape(self.n, -1), dtype=np.float64)
        Y = _APPLY[self.kind](self, X2)
        return Y[:, 0] if vec else Y

    __matmul__ = apply

    def to_dense(self) -> np.ndarray:
        """Materialize the operator as an ``output_dim x n`` array."""
        return self.apply(np.eye(self.n))

    def to_dict(self) -> dict:
        d: dict[str, Any] = {"kind": self.kind, "n": self.n, "l": self.l, "s": self.s, "seed": self.seed}
        if self.kind == "psi_wrapped":
            d["m_keep"] = self.m_keep
            d["inner_kind"] = self.inner.kind
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SketchOperator":
        if d["kind"] == "psi_wrapped":
            return make_sketch(
                "psi_wrapped", d["n"], d["l"], d.get("seed", 0), s=d.get("s"),
                m_keep=d["m_keep"], inner_kind=d.get("inner_kind", "gaussian"),
            )
        return make_sketch(d["kind"], d["n"], d["l"], d.get("seed", 0), s=d.get("s"))


def _apply_identity(op, X):
    return X.copy()


def _apply_gaussian(op, X):
    return op._state["matrix"] @ X


def _apply_hashing(op, X):
    out = np.zeros((op.l, X.shape[1]))
    _backend.hash_apply(op._state["rows"], op._state["vals"], X, out)
    return out


def _apply_srht(op, X):
    n_pad = op._state["n_pad"]
    Y = np.zeros((n_pad, X.shape[1]))
    Y[: op.n] = X
    Y *= op._state["signs"][:, None]
    _backend.fwht_inplace(Y)
    # sqrt(n_pad / l) times the 1/sqrt(n_pad) Hadamard normalization
    return Y[op._state["rows"]] * (1.0 / math.sqrt(op.l))


def _apply_psi(op, X):
    m = op.m_keep
    return np.vstack([X[:m], op.inner.apply(X[m:])])


_APPLY = {
    "identity": _apply_identity,
    "gaussian": _apply_gaussian,
    "s_hashing": _apply_hashing,
    "srht": _apply_srht,
    "psi_wrapped": _apply_psi,
}


def _hash_pattern(rng: np.random.Generator, n: int, l: int, s: int):
    rows = np.empty((n, s), dtype=np.int64)
    step = max(1, _HASH_CHUNK // l)
    for start in range(0, n, step):
        stop = min(n, start + step)
        keys = rng.random((stop - start, l))
        idx = np.argpartition(keys, s - 1, axis=1)[:, :s] if s < l else np.argsort(keys, axis=1)
        rows[start:stop] = np.sort(idx, axis=1)
    signs = rng.integers(0, 2, size=(n, s)) * 2.0 - 1.0
    return rows, signs / math.sqrt(s)


def make_sketch(
    kind: str,
    n: int,
    l: int,
    seed: int = 0,
    s: Optional[int] = None,
    m_keep: int = 0,
    inner_kind: str = "gaussian",
) -> SketchOperator:
    """Draw a sketching operator.

    Parameters
    ----------
    kind : str
        Distribution name, see :data:`KINDS`.
    n : int
        Input dimension. For ``psi_wrapped`` this is the full ambient
        dimension; the inner operator acts on the last ``n - m_keep`` entries.
    l : int
        Sketch dimension (of the inner operator for ``psi_wrapped``).
    seed : int
        64-bit seed.
    s : int, optional
        Nonzeros per column for ``s_hashing``; defaults to ``min(8, l)``.
    m_keep : int
        Pass-through length for ``psi_wrapped``.
    inner_kind : str
        Distribution of the inner operator for ``psi_wrapped``.
    """
    if kind not in KINDS:
        raise ParameterError(f"unknown sketch kind {kind!r}")
    n, l = int(n), int(l)
    if n < 1 or l < 1:
        raise ParameterError(f"dimensions must be positive, got n={n}, l={l}")
    seed = int(seed)

    if kind == "psi_wrapped":
        if not 0 <= m_keep < n:
            raise ParameterError(f"m_keep must lie in [0, n), got {m_keep}")
        if inner_kind == "psi_wrapped":
            raise ParameterError("psi_wrapped operators cannot be nested")
        inner = make_sketch(inner_kind, n - m_keep, l, seed, s=s)
        return SketchOperator(kind, n, l, seed, inner.s, int(m_keep), {"inner": inner})

    rng = _rng(seed)
    if kind == "identity":
        if l != n:
            raise ParameterError(f"identity sketch needs l == n, got l={l}, n={n}")
        return SketchOperator(kind, n, l, seed)
    if kind == "gaussian":
        if l > n:
            raise ParameterError(f"gaussian sketch needs l <= n, got l={l}, n={n}")
        M = rng.standard_normal((l, n)) / math.sqrt(l)
        return SketchOperator(kind, n, l, seed, _state={"matrix": _frozen(M)})
    if kind == "s_hashing":
        if l > n:
            raise ParameterError(f"s-hashing sketch needs l <= n, got l={l}, n={n}")
        s = min(8, l) if s is None else int(s)
        if s < 1 or s > l:
            raise ParameterError(f"s must lie in [1, l={l}], got {s}")
        rows, vals = _hash_pattern(rng, n, l, s)
        return SketchOperator(kind, n, l, seed, s, _state={"rows": _frozen(rows), "vals": _frozen(vals)})
    # srht
    n_pad = _next_pow2(n)
    if l > n_pad:
        raise ParameterError(f"srht sketch needs l <= {n_pad}, got {l}")
    signs = rng.integers(0, 2, size=n_pad) * 2.0 - 1.0
    rows = np.sort(rng.choice(n_pad, size=l, replace=False))
    return SketchOperator(
        kind, n, l, seed,
        _state={"n_pad": n_pad, "signs": _frozen(signs), "rows": _frozen(rows)},
    )


def wrap_psi(op: SketchOperator, m_keep: int) -> SketchOperator:
    """Build ``[x[:m_keep]; op(x[m_keep:])]`` around an existing operator."""
    if op.kind == "psi_wrapped":
        raise ParameterError("operator is already wrapped")
    if m_keep < 0:
        raise ParameterError(f"m_keep must be nonnegative, got {m_keep}")
    return SketchOperator("psi_wrapped", op.n + int(m_keep), op.l, op.seed, op.s, int(m_keep), {"inner": op})


def fwht(x: np.ndarray) -> np.ndarray:
    """Orthonormal Walsh-Hadamard transform along axis 0.

    The length must be a power of two. The transform is symmetric and
    orthogonal, so applying it twice returns the input.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0] if x.ndim else 0
    if n < 1 or n & (n - 1):
        raise ShapeError(f"length must be a power of two, got {n}")
    Y = np.array(x.reshape(n, -1), order="C")
    _backend.fwht_inplace(Y)
    Y /= math.sqrt(n)
    return Y.reshape(x.shape)


def recommend_dim(
    m: int,
    kind: str,
    n: Optional[int] = None,
    gaussian_factor: float = DEFAULT_GAUSSIAN_FACTOR,
    log_factor: float = DEFAULT_LOG_FACTOR,
) -> int:
    """Sketch size for embedding an ``m``-dimensional subspace.

    Gaussian: ``ceil(gaussian_factor * m)``. Structured kinds (s-hashing,
    SRHT): ``ceil(log_factor * m * max(1, ln m))``. The defaults give a
    distortion below 0.6 with high probability; pass ``gaussian_factor=4`` and
    ``log_factor=2`` for the smaller textbook-style sizes. When ``n`` is given
    the result is clamped to ``n`` (to the padded length for SRHT).
    """
    if m < 1:
        raise ParameterError(f"m must be positive, got {m}")
    if kind == "gaussian":
        l = math.ceil(gaussian_factor * m - 1e-9)
    elif kind in ("s_hashing", "srht"):
        l = math.ceil(log_factor * m * max(1.0, math.log(m)) - 1e-9)
    elif kind == "identity":
        if n is None:
            raise ParameterError("identity sketch size needs n")
        return int(n)
    else:
        raise ParameterError(f"no size policy for kind {kind!r}")
    if n is not None:
        cap = _next_pow2(n) if kind == "srht" else n
        l = min(l, cap)
    return max(1, int(l))
