"""Kernel backend selection.

The expected-ebit optimizer's table build is the package's hot loop.  It has
two interchangeable implementations: a numba @njit kernel and a vectorized
pure-numpy twin.  Selection is by the ENTGATES_BACKEND environment variable:

    ENTGATES_BACKEND=numba   require numba (error if unavailable)
    ENTGATES_BACKEND=numpy   force the pure-numpy path
    unset / auto             numba when importable, numpy otherwise

Both paths evaluate the same formulas; tables agree to ~1e-12 (see
benchmarks/bench_kernels.py and tests/test_optimizer.py).
"""
from __future__ import annotations

import os

_choice = os.environ.get("ENTGATES_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"ENTGATES_BACKEND={_choice!r} not one of auto|numba|numpy")

HAS_NUMBA = False
if _choice in ("auto", "numba"):
    try:
        import numba  # noqa: F401
        HAS_NUMBA = True
    except ImportError:
        if _choice == "numba":
            raise RuntimeError("ENTGATES_BACKEND=numba but numba is not importable")

USE_NUMBA = HAS_NUMBA and _choice != "numpy"


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"
