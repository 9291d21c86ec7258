"""Synthetic test matrices."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from ..errors import ParameterError


def _rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def gen_svd_matrix(n: int, m: int, sigma_max: float, sigma_min: float, seed: int = 0) -> np.ndarray:
    """``U diag(sigma) V^T`` with log-spaced singular values.

    ``U`` (n x m) and ``V`` (m x m) come from QR factorizations of Gaussian
    matrices, so they are Haar distributed up to column signs.
    """
    if not n >= m >= 1:
        raise ParameterError(f"need n >= m >= 1, got n={n}, m={m}")
    if not sigma_max >= sigma_min > 0:
        raise ParameterError(f"need sigma_max >= sigma_min > 0, got {sigma_max}, {sigma_min}")
    rng = _rng(seed)
    U = np.linalg.qr(rng.standard_normal((n, m)))[0]
    V = np.linalg.qr(rng.standard_normal((m, m)))[0]
    sigma = np.geomspace(sigma_max, sigma_min, m)
    return (U * sigma) @ V.T


def gen_tridiag_spectrum(n: int, kind: str = "harmonic", noise_scale: float = 0.01, seed: int = 0) -> sp.csr_array:
    """Tridiagonal matrix with a prescribed diagonal and Gaussian off-diagonals.

    ``kind="harmonic"`` puts ``1 + 1/i^2`` on the diagonal, ``"geometric"``
    puts ``0.99^i`` (1-based ``i``). Sub- and super-diagonal entries are
    independent standard normals times ``noise_scale``, so the matrix is
    nonsymmetric unless the noise is zero.
    """
    if n < 2:
        raise ParameterError(f"need n >= 2, got {n}")
    i = np.arange(1, n + 1, dtype=np.float64)
    if kind == "harmonic":
        d = 1.0 + 1.0 / i**2
    elif kind == "geometric":
        d = 0.99**i
    else:
        raise ParameterError(f"unknown spectrum kind {kind!r}")
    rng = _rng(seed)
    sub = rng.standard_normal(n - 1) * noise_scale
    sup = rng.standard_normal(n - 1) * noise_scale
    return sp.csr_array(sp.diags([sub, d, sup], [-1, 0, 1], format="csr"))


def gen_laplacian_1d(n: int, shift: float = 2.0) -> sp.csr_array:
    """``tridiag(-1, 2 + shift, -1)``; symmetric positive definite for ``shift > -4 sin^2``."""
    if n < 1:
        raise ParameterError(f"need n >= 1, got {n}")
    e = np.ones(n)
    return sp.csr_array(sp.diags([-e[:-1], (2.0 + shift) * e, -e[:-1]], [-1, 0, 1], format="csr"))


def gen_dense_random(n: int, shift: float = 0.0, scale: float = 1.0, seed: int = 0) -> np.ndarray:
    """Gaussian matrix scaled by ``scale / sqrt(n)`` plus ``shift * I``."""
    rng = _rng(seed)
    return rng.standard_normal((n, n)) * (scale / np.sqrt(n)) + shift * np.eye(n)


def gen_sparse_random(n: int, density: float = 0.005, shift: float = 0.0, seed: int = 0) -> sp.csr_array:
    """Random sparse matrix with Gaussian entries plus ``shift * I``."""
    rng = _rng(seed)
    M = sp.random_array((n, n), density=density, random_state=rng, data_sampler=rng.standard_normal, format="csr")
    return sp.csr_array(M + shift * sp.eye_array(n, format="csr"))


GENERATORS = {
    "svd": gen_svd_matrix,
    "tridiag": gen_tridiag_spectrum,
    "laplacian": gen_laplacian_1d,
    "dense_random": gen_dense_random,
    "sparse_random": gen_sparse_random,
}
