"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``.

Each function performs the same floating point operations in the same
order as its compiled counterpart, so both backends give identical bits.
"""
import numpy as np


def fwht_inplace(x: np.ndarray) -> None:
    n, k = x.shape
    h = 1
    while h < n:
        v = x.reshape(n // (2 * h), 2, h, k)
        a = v[:, 0].copy()
        b = v[:, 1]
        v[:, 0] = a + b
        v[:, 1] = a - b
        h *= 2


def hash_apply(rows: np.ndarray, vals: np.ndarray, X: np.ndarray, out: np.ndarray) -> None:
    n, s = rows.shape
    # add.at is unbuffered and walks the index array in order, matching the
    # i-major, t-minor accumulation of the compiled loop
    contrib = vals.reshape(n, s, 1) * X.reshape(n, 1, -1)
    np.add.at(out, rows.ravel(), contrib.reshape(n * s, -1))
