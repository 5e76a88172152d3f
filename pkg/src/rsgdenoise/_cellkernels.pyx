# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled gather/scatter between an image and its per-cell sub-samples."""

import numpy as np
cimport numpy as cnp
from cython cimport floating

cnp.import_array()


def split_cells(floating[:, :, ::1] img, const cnp.int64_t[:, :, ::1] perms, Py_ssize_t stride):
    cdef Py_ssize_t gh = perms.shape[0], gw = perms.shape[1], nsub = perms.shape[2]
    cdef Py_ssize_t nch = img.shape[2]
    cdef Py_ssize_t k, u, v, c, q, r, col
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.empty((nsub, gh, gw, nch), dtype=dtype)
    cdef floating[:, :, :, ::1] out = out_arr
    with nogil:
        for u in range(gh):
            for v in range(gw):
                for k in range(nsub):
                    q = perms[u, v, k]
                    r = u * stride + q // stride
                    col = v * stride + q % stride
                    for c in range(nch):
                        out[k, u, v, c] = img[r, col, c]
    return out_arr


def merge_cells(floating[:, :, :, ::1] subs, const cnp.int64_t[:, :, ::1] perms, Py_ssize_t stride):
    cdef Py_ssize_t gh = perms.shape[0], gw = perms.shape[1], nsub = perms.shape[2]
    cdef Py_ssize_t nch = subs.shape[3]
    cdef Py_ssize_t k, u, v, c, q, r, col
    if floating is float:
        dtype = np.float32
    else:
        dtype = np.float64
    out_arr = np.empty((gh * stride, gw * stride, nch), dtype=dtype)
    cdef floating[:, :, ::1] out = out_arr
    with nogil:
        for u in range(gh):
            for v in range(gw):
                for k in range(nsub):
                    q = perms[u, v, k]
                    r = u * stride + q // stride
                    col = v * stride + q % stride
                    for c in range(nch):
                        out[r, col, c] = subs[k, u, v, c]
    return out_arr
