"""Backend selection for the distance kernels.

The compiled extension is used when it imports; setting the environment
variable ``ACHORDS_PURE_PYTHON=1`` forces the numpy fallback.
"""

import os

from . import _kernels_py

if os.environ.get("ACHORDS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

adaptive_distances = _impl.adaptive_distances
distance_matrix = _impl.distance_matrix

__all__ = ["BACKEND", "adaptive_distances", "distance_matrix"]
