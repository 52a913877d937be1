"""Backend selection for the hot loops.

The compiled extension is used when it is importable; setting the
environment variable ``COVBRIDGE_PURE_PYTHON=1`` forces the numpy fallback.
``BACKEND`` names the active implementation.
"""
import os

from . import _kernels_py

if os.environ.get("COVBRIDGE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
else:
    try:
        from . import _kernels as _impl
    except ImportError:
        _impl = _kernels_py

BACKEND = "python" if _impl is _kernels_py else "cython"

linear_rk4 = _impl.linear_rk4
lyap_rk4 = _impl.lyap_rk4
gram_backward = _impl.gram_backward
em_paths = _impl.em_paths
