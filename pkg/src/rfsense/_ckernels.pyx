# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twins of the kernels in ``_kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport floor, ceil

cnp.import_array()


def iou_matrix(a, b):
    cdef double[:, ::1] av = np.ascontiguousarray(np.asarray(a, dtype=np.float64).reshape(-1, 2))
    cdef double[:, ::1] bv = np.ascontiguousarray(np.asarray(b, dtype=np.float64).reshape(-1, 2))
    cdef Py_ssize_t na = av.shape[0], nb = bv.shape[0], i, j
    out = np.zeros((na, nb), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double lo, hi, inter, union
    for i in range(na):
        for j in range(nb):
            lo = av[i, 0] if av[i, 0] > bv[j, 0] else bv[j, 0]
            hi = av[i, 1] if av[i, 1] < bv[j, 1] else bv[j, 1]
            inter = hi - lo
            if inter <= 0:
                continue
            union = (av[i, 1] - av[i, 0]) + (bv[j, 1] - bv[j, 0]) - inter
            if union > 0:
                o[i, j] = inter / union
    return out


def nms_sorted(intervals, classes, double overlap):
    cdef double[:, ::1] iv = np.ascontiguousarray(np.asarray(intervals, dtype=np.float64).reshape(-1, 2))
    cdef long long[::1] cls = np.ascontiguousarray(np.asarray(classes, dtype=np.int64))
    cdef Py_ssize_t n = iv.shape[0], i, j, n_keep = 0
    supp_arr = np.zeros(n, dtype=np.uint8)
    keep_arr = np.empty(n, dtype=np.int64)
    cdef unsigned char[::1] supp = supp_arr
    cdef long long[::1] keep = keep_arr
    cdef double lo, hi, inter, union
    for i in range(n):
        if supp[i]:
            continue
        keep[n_keep] = i
        n_keep += 1
        for j in range(i + 1, n):
            if supp[j] or cls[j] != cls[i]:
                continue
            lo = iv[i, 0] if iv[i, 0] > iv[j, 0] else iv[j, 0]
            hi = iv[i, 1] if iv[i, 1] < iv[j, 1] else iv[j, 1]
            inter = hi - lo
            if inter <= 0:
                continue
            union = (iv[i, 1] - iv[i, 0]) + (iv[j, 1] - iv[j, 0]) - inter
            if union > 0 and inter / union > overlap:
                supp[j] = 1
    return keep_arr[:n_keep].copy()


def energy_scan(values, double threshold, int hysteresis, int min_width):
    cdef double[::1] v = np.ascontiguousarray(np.asarray(values, dtype=np.float64))
    cdef Py_ssize_t n = v.shape[0], i, n_out = 0
    out_arr = np.empty((n // 2 + 1, 2), dtype=np.int64)
    cdef long long[:, ::1] out = out_arr
    cdef bint inside = False
    cdef Py_ssize_t start = 0, last_above = 0
    cdef int below = 0
    for i in range(n):
        if v[i] > threshold:
            if not inside:
                inside = True
                start = i
            last_above = i
            below = 0
        elif inside:
            below += 1
            if below >= hysteresis:
                if last_above + 1 - start >= min_width:
                    out[n_out, 0] = start
                    out[n_out, 1] = last_above + 1
                    n_out += 1
                inside = False
                below = 0
    if inside and last_above + 1 - start >= min_width:
        out[n_out, 0] = start
        out[n_out, 1] = last_above + 1
        n_out += 1
    return out_arr[:n_out].copy()


def roi_bins(rois, Py_ssize_t n_cells, double stride, Py_ssize_t out_len):
    cdef double[:, ::1] rv = np.ascontiguousarray(np.asarray(rois, dtype=np.float64).reshape(-1, 2))
    cdef Py_ssize_t n = rv.shape[0], r, j, f0, f1, length, lo, hi
    out_arr = np.full((n, out_len, 2), -1, dtype=np.int64)
    cdef long long[:, :, ::1] out = out_arr
    for r in range(n):
        f0 = <Py_ssize_t>floor(rv[r, 0] / stride)
        if f0 < 0:
            f0 = 0
        f1 = <Py_ssize_t>ceil(rv[r, 1] / stride)
        if f1 > n_cells:
            f1 = n_cells
        length = f1 - f0
        if length <= 0:
            continue
        for j in range(out_len):
            lo = f0 + (j * length) // out_len
            hi = f0 + ((j + 1) * length + out_len - 1) // out_len
            if hi <= lo:
                hi = lo + 1
            out[r, j, 0] = lo
            out[r, j, 1] = hi
    return out_arr


def roi_pool_forward(features, bins):
    x64 = np.ascontiguousarray(features, dtype=np.float64)
    cdef double[:, ::1] x = x64
    cdef long long[:, :, ::1] bv = np.ascontiguousarray(bins, dtype=np.int64)
    cdef Py_ssize_t n_roi = bv.shape[0], k_out = bv.shape[1], c = x.shape[0]
    cdef Py_ssize_t r, j, ch, i, lo, hi, best_i
    cdef double best
    pooled_arr = np.zeros((n_roi, c, k_out), dtype=np.float64)
    arg_arr = np.full((n_roi, c, k_out), -1, dtype=np.int64)
    cdef double[:, :, ::1] pooled = pooled_arr
    cdef long long[:, :, ::1] arg = arg_arr
    for r in range(n_roi):
        for j in range(k_out):
            lo = bv[r, j, 0]
            hi = bv[r, j, 1]
            if lo < 0:
                continue
            for ch in range(c):
                best_i = lo
                best = x[ch, lo]
                for i in range(lo + 1, hi):
                    if x[ch, i] > best:
                        best = x[ch, i]
                        best_i = i
                pooled[r, ch, j] = best
                arg[r, ch, j] = best_i
    return pooled_arr.astype(np.asarray(features).dtype, copy=False), arg_arr


def roi_pool_backward(grad, argmax, Py_ssize_t n_cells):
    g_in = np.asarray(grad)
    cdef double[:, :, ::1] g = np.ascontiguousarray(g_in, dtype=np.float64)
    cdef long long[:, :, ::1] a = np.ascontiguousarray(argmax, dtype=np.int64)
    cdef Py_ssize_t n_roi = g.shape[0], c = g.shape[1], k_out = g.shape[2], r, ch, j
    dx_arr = np.zeros((c, n_cells), dtype=np.float64)
    cdef double[:, ::1] dx = dx_arr
    for r in range(n_roi):
        for ch in range(c):
            for j in range(k_out):
                if a[r, ch, j] >= 0:
                    dx[ch, a[r, ch, j]] += g[r, ch, j]
    return dx_arr.astype(g_in.dtype, copy=False)


def greedy_match(iou, order, det_cls, truth_cls, double iou_min, bint classful):
    cdef double[:, ::1] iv = np.ascontiguousarray(iou, dtype=np.float64)
    cdef long long[::1] ordv = np.ascontiguousarray(order, dtype=np.int64)
    cdef long long[::1] dc = np.ascontiguousarray(det_cls, dtype=np.int64)
    cdef long long[::1] tc = np.ascontiguousarray(truth_cls, dtype=np.int64)
    cdef Py_ssize_t n_det = iv.shape[0], n_truth = iv.shape[1], k, d, t, best
    cdef double best_iou
    d2t_arr = np.full(n_det, -1, dtype=np.int64)
    diou_arr = np.zeros(n_det, dtype=np.float64)
    taken_arr = np.zeros(n_truth, dtype=np.uint8)
    cdef long long[::1] d2t = d2t_arr
    cdef double[::1] diou = diou_arr
    cdef unsigned char[::1] taken = taken_arr
    for k in range(ordv.shape[0]):
        d = ordv[k]
        best = -1
        best_iou = iou_min
        for t in range(n_truth):
            if taken[t] or iv[d, t] <= best_iou:
                continue
            best = t
            best_iou = iv[d, t]
        if best < 0:
            continue
        taken[best] = 1
        if classful and dc[d] != tc[best]:
            continue
        d2t[d] = best
        diou[d] = best_iou
    return d2t_arr, diou_arr
