"""Select the compiled kernels when available, else the numpy fallback.

Set ``RANDKRYLOV_BACKEND=python`` to force the fallback.
"""
import os

BACKEND = "python"
if os.environ.get("RANDKRYLOV_BACKEND", "").lower() != "python":
    try:
        from . import _kernels as kernels  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:  # extension not built
        kernels = None
else:
    kernels = None

if kernels is None:
    from . import _kernels_py as kernels

fwht_inplace = kernels.fwht_inplace
hash_apply = kernels.hash_apply

__all__ = ["BACKEND", "fwht_inplace", "hash_apply"]
