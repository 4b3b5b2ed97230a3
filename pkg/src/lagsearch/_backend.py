"""Select the DTW kernel backend at import time.

The compiled ``_dtw_core`` extension is preferred. Setting
``LAGSEARCH_PURE_PYTHON=1`` forces the pure-Python fallback, which is also
used automatically when the extension has not been built.
"""

import os

from . import _dtw_py

if os.environ.get("LAGSEARCH_PURE_PYTHON", "") not in ("", "0"):
    kernels = _dtw_py
    BACKEND = "python"
else:
    try:
        from . import _dtw_core as kernels
        BACKEND = "compiled"
    except ImportError:  # extension not built
        kernels = _dtw_py
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
