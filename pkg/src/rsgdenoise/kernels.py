"""Backend selection for the sub-sampling kernels.

The compiled extension is used when it was built; otherwise the numpy
implementation takes over. Set ``RSGDENOISE_PURE_PYTHON=1`` to force the
fallback (useful for comparing the two).
"""

import os

import numpy as np

from . import _cellkernels_py

BACKEND = "python"
_impl = _cellkernels_py

if os.environ.get("RSGDENOISE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _cellkernels as _compiled
    except ImportError:  # extension not built
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"


def _prepare(arr, perms):
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float32)
    return arr, np.ascontiguousarray(perms, dtype=np.int64)


def split_cells(img, perms, stride):
    """Gather (H, W, C) into (s*s, H/s, W/s, C) following per-cell permutations."""
    img, perms = _prepare(img, perms)
    return _impl.split_cells(img, perms, int(stride))


def merge_cells(subs, perms, stride):
    """Scatter sub-samples back into the (H, W, C) image; exact inverse of split_cells."""
    subs, perms = _prepare(subs, perms)
    return _impl.merge_cells(subs, perms, int(stride))
