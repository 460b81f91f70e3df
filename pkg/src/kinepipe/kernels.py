"""Kernel selection.

The compiled extension is used when it imports; otherwise the numpy
fallback. Set ``KINEPIPE_PURE_PYTHON=1`` to force the fallback.
"""
import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("KINEPIPE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

segment_frames = _impl.segment_frames
site_positions = _impl.site_positions
site_jacobian = _impl.site_jacobian

__all__ = ["BACKEND", "segment_frames", "site_positions", "site_jacobian"]
