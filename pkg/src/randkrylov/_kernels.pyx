# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for the sketch operators."""

cimport cython


def fwht_inplace(double[:, ::1] x):
    """Unnormalized Walsh-Hadamard butterflies along axis 0, in place."""
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k = x.shape[1]
    cdef Py_ssize_t h = 1, i, j, c
    cdef double a, b
    with nogil:
        while h < n:
            i = 0
            while i < n:
                for j in range(i, i + h):
                    for c in range(k):
                        a = x[j, c]
                        b = x[j + h, c]
                        x[j, c] = a + b
                        x[j + h, c] = a - b
                i += 2 * h
            h *= 2


def hash_apply(const long long[:, ::1] rows, const double[:, ::1] vals,
               const double[:, ::1] X, double[:, ::1] out):
    """Accumulate out[rows[i, t], :] += vals[i, t] * X[i, :]."""
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t k = X.shape[1]
    cdef Py_ssize_t s = rows.shape[1]
    cdef Py_ssize_t i, t, c, r
    cdef double v
    with nogil:
        for i in range(n):
            for t in range(s):
                r = rows[i, t]
                v = vals[i, t]
                for c in range(k):
                    out[r, c] += v * X[i, c]
