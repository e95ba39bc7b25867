"""Select the kernel implementation at import time.

The compiled extension is preferred. Setting ``SINGVI_PURE_PYTHON=1`` in the
environment forces the pure-Python fallback (useful for debugging and for the
benchmark that compares the two).
"""

import os

if os.environ.get("SINGVI_PURE_PYTHON", "").strip() not in ("", "0"):
    from . import _kernels_py as kernels
    BACKEND = "python"
else:
    try:
        from . import _kernels as kernels
        BACKEND = "cython"
    except ImportError:  # extension not built
        from . import _kernels_py as kernels
        BACKEND = "python"

__all__ = ["kernels", "BACKEND"]
