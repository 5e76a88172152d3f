"""Pure numpy fallback for the cell gather/scatter kernels.

Same signatures and results as the compiled ``_cellkernels`` module.
"""

import numpy as np


def _source_index(perms, stride):
    gh, gw, _ = perms.shape
    u = np.arange(gh)[:, None, None]
    v = np.arange(gw)[None, :, None]
    rows = u * stride + perms // stride
    cols = v * stride + perms % stride
    # (gh, gw, s*s) -> (s*s, gh, gw)
    return rows.transpose(2, 0, 1), cols.transpose(2, 0, 1)


def split_cells(img, perms, stride):
    rows, cols = _source_index(perms, stride)
    return np.ascontiguousarray(img[rows, cols])


def merge_cells(subs, perms, stride):
    gh, gw, _ = perms.shape
    rows, cols = _source_index(perms, stride)
    out = np.empty((gh * stride, gw * stride, subs.shape[3]), dtype=subs.dtype)
    out[rows, cols] = subs
    return out
