"""Kernel backend selection.

The hot conv/pool kernels exist twice: numba-compiled (fast) and pure numpy
(portable fallback).  Selection happens once at import time from the
``WDSM_BACKEND`` environment variable:

    WDSM_BACKEND=auto    use numba when importable, else numpy (default)
    WDSM_BACKEND=numba   require numba, fail if unavailable
    WDSM_BACKEND=numpy   force the pure-numpy fallback

``benchmarks/bench_kernels.py`` times the two side by side.
"""

import os

_CHOICE = os.environ.get("WDSM_BACKEND", "auto").strip().lower()
if _CHOICE not in ("auto", "numba", "numpy"):
    raise RuntimeError(
        f"WDSM_BACKEND must be one of auto|numba|numpy, got {_CHOICE!r}"
    )

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

if _CHOICE == "numba" and not HAS_NUMBA:
    raise RuntimeError("WDSM_BACKEND=numba but numba is not importable")

if _CHOICE != "numpy" and HAS_NUMBA:
    from . import kernels_numba as kernels

    BACKEND = "numba"
else:
    from . import kernels_numpy as kernels

    BACKEND = "numpy"

__all__ = ["kernels", "BACKEND", "HAS_NUMBA"]
