"""Select the compiled kernels when available, else the pure-Python ones.

Set ``PAINMTL_PURE_PYTHON=1`` to force the fallback (used by the benchmark
and the backend-equivalence tests).
"""
import os

from . import _kernels_py

if os.environ.get("PAINMTL_PURE_PYTHON", "") not in ("", "0"):
    kernels = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:
        kernels = _kernels_py
        BACKEND = "python"

mean_abs_lag_diff = kernels.mean_abs_lag_diff
qrs_scan = kernels.qrs_scan
