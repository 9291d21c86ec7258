"""Matrix Market reader with line-numbered errors.

scipy.io.mmread reports malformed files without a location, so the small
subset needed here (real/integer, general/symmetric, coordinate/array) is
parsed directly.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np
import scipy.sparse as sp

from ..errors import MatrixMarketError, UnsupportedFormatError
from ..krylov import LinearOperator

_FORMATS = ("coordinate", "array")
_FIELDS = ("real", "integer", "double")
_SYMMETRIES = ("general", "symmetric")


def _parse_header(line: str, lineno: int):
    tok = line.strip().split()
    if len(tok) != 5 or tok[0].lower() != "%%matrixmarket":
        raise MatrixMarketError("header must read '%%MatrixMarket matrix <format> <field> <symmetry>'", line=lineno)
    obj, fmt, field, sym = (t.lower() for t in tok[1:])
    if obj != "matrix":
        raise UnsupportedFormatError(f"object {obj!r} is not supported")
    if fmt not in _FORMATS:
        raise MatrixMarketError(f"unknown format {fmt!r}", line=lineno)
    if field in ("complex", "pattern"):
        raise UnsupportedFormatError(f"{field} fields are not supported")
    if field not in _FIELDS:
        raise MatrixMarketError(f"unknown field {field!r}", line=lineno)
    if sym in ("skew-symmetric", "hermitian"):
        raise UnsupportedFormatError(f"{sym} storage is not supported")
    if sym not in _SYMMETRIES:
        raise MatrixMarketError(f"unknown symmetry {sym!r}", line=lineno)
    return fmt, sym


def _ints(tok, count, lineno, what):
    if len(tok) != count:
        raise MatrixMarketError(f"expected {count} fields in {what}, got {len(tok)}", line=lineno)
    try:
        return [int(t) for t in tok]
    except ValueError:
        raise MatrixMarketError(f"non-integer value in {what}", line=lineno) from None


def _float(t, lineno):
    try:
        return float(t)
    except ValueError:
        raise MatrixMarketError(f"cannot parse value {t!r}", line=lineno) from None


def read_matrix_market(path):
    """Parse a Matrix Market file.

    Returns a ``csr_array`` for coordinate files and a dense ``ndarray`` for
    array files. Symmetric storage is expanded to the full matrix.
    """
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", line=1)
    fmt, sym = _parse_header(lines[0], 1)
    body = [(i + 1, ln) for i, ln in enumerate(lines[1:], start=1) if ln.strip() and not ln.lstrip().startswith("%")]
    if not body:
        raise MatrixMarketError("missing size line", line=len(lines))
    size_no, size_line = body[0]
    entries = body[1:]
    if fmt == "coordinate":
        nr, nc, nnz = _ints(size_line.split(), 3, size_no, "size line")
    else:
        nr, nc = _ints(size_line.split(), 2, size_no, "size line")
        nnz = nr * nc if sym == "general" else nc * (nc + 1) // 2
    if nr < 0 or nc < 0 or nnz < 0:
        raise MatrixMarketError("negative size", line=size_no)
    if sym == "symmetric" and nr != nc:
        raise MatrixMarketError("symmetric matrix must be square", line=size_no)
    if len(entries) != nnz:
        where = entries[nnz][0] if len(entries) > nnz else (entries[-1][0] + 1 if entries else size_no + 1)
        raise MatrixMarketError(f"expected {nnz} entries, found {len(entries)}", line=where)

    if fmt == "coordinate":
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for t, (no, ln) in enumerate(entries):
            tok = ln.split()
            if len(tok) != 3:
                raise MatrixMarketError(f"expected 'row col value', got {len(tok)} fields", line=no)
            i, j = _ints(tok[:2], 2, no, "entry indices")
            if not (1 <= i <= nr and 1 <= j <= nc):
                raise MatrixMarketError(f"index ({i}, {j}) outside declared size {nr}x{nc}", line=no)
            if sym == "symmetric" and i < j:
                raise MatrixMarketError(f"entry ({i}, {j}) above the diagonal in symmetric storage", line=no)
            rows[t], cols[t], vals[t] = i - 1, j - 1, _float(tok[2], no)
        if sym == "symmetric":
            off = rows != cols
            rows, cols, vals = (np.concatenate([rows, cols[off]]), np.concatenate([cols, rows[off]]),
                                np.concatenate([vals, vals[off]]))
        return sp.coo_array((vals, (rows, cols)), shape=(nr, nc)).tocsr()

    M = np.zeros((nr, nc))
    it = iter(entries)
    for j in range(nc):
        for i in range(j if sym == "symmetric" else 0, nr):
            no, ln = next(it)
            tok = ln.split()
            if len(tok) != 1:
                raise MatrixMarketError(f"expected one value per line, got {len(tok)}", line=no)
            M[i, j] = _float(tok[0], no)
    if sym == "symmetric":
        M = np.tril(M) + np.tril(M, -1).T
    return M


def load_matrix_market(path) -> LinearOperator:
    """Read a Matrix Market file and wrap it as a :class:`LinearOperator`."""
    return LinearOperator(read_matrix_market(path))
