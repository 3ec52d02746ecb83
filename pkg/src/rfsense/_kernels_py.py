"""Pure-Python/numpy versions of the loop-heavy kernels.

Every function here has a twin with the same signature in ``_ckernels.pyx``.
Interval arrays are float64 ``(n, 2)`` with columns ``start, end``.
"""
import numpy as np


def iou_matrix(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    lo = np.maximum(a[:, None, 0], b[None, :, 0])
    hi = np.minimum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(hi - lo, 0.0, None)
    union = (a[:, 1] - a[:, 0])[:, None] + (b[:, 1] - b[:, 0])[None, :] - inter
    out = np.zeros_like(inter)
    np.divide(inter, union, out=out, where=union > 0)
    return out


def nms_sorted(intervals, classes, overlap):
    """Greedy suppression over intervals already sorted by priority.

    Returns the kept row indices in input order.
    """
    iv = np.asarray(intervals, dtype=np.float64).reshape(-1, 2)
    cls = np.asarray(classes, dtype=np.int64)
    n = iv.shape[0]
    suppressed = np.zeros(n, dtype=bool)
    keep = []
    lengths = iv[:, 1] - iv[:, 0]
    for i in range(n):
        if suppressed[i]:
            continue
        keep.append(i)
        rest = np.arange(i + 1, n)
        rest = rest[~suppressed[rest] & (cls[rest] == cls[i])]
        if rest.size == 0:
            continue
        inter = np.clip(np.minimum(iv[i, 1], iv[rest, 1]) - np.maximum(iv[i, 0], iv[rest, 0]), 0.0, None)
        union = lengths[i] + lengths[rest] - inter
        ov = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)
        suppressed[rest[ov > overlap]] = True
    return np.asarray(keep, dtype=np.int64)


def energy_scan(values, threshold, hysteresis, min_width):
    """Left-to-right excursion scan with an N-bin release hysteresis."""
    v = np.asarray(values, dtype=np.float64)
    out = []
    inside = False
    start = 0
    last_above = 0
    below = 0
    for i in range(v.shape[0]):
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
                    out.append((start, last_above + 1))
                inside = False
                below = 0
    if inside and last_above + 1 - start >= min_width:
        out.append((start, last_above + 1))
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


def roi_bins(rois, n_cells, stride, out_len):
    """Map bin-space regions to feature cells and split into ``out_len`` sub-bins.

    Returns int64 ``(R, out_len, 2)`` half-open cell ranges, each non-empty.
    Regions with no cells after mapping get ``-1`` everywhere.
    """
    rois = np.asarray(rois, dtype=np.float64).reshape(-1, 2)
    out = np.full((rois.shape[0], out_len, 2), -1, dtype=np.int64)
    for r in range(rois.shape[0]):
        f0 = max(int(np.floor(rois[r, 0] / stride)), 0)
        f1 = min(int(np.ceil(rois[r, 1] / stride)), n_cells)
        length = f1 - f0
        if length <= 0:
            continue
        for j in range(out_len):
            lo = f0 + (j * length) // out_len
            hi = f0 + -((-(j + 1) * length) // out_len)
            if hi <= lo:
                hi = lo + 1
            out[r, j, 0] = lo
            out[r, j, 1] = hi
    return out


def roi_pool_forward(features, bins):
    """Max-pool ``features`` (C, L) over precomputed sub-bins.

    Returns ``(pooled (R, C, K), argmax (R, C, K))`` with argmax in cell units.
    """
    x = np.asarray(features)
    n_roi, k_out = bins.shape[0], bins.shape[1]
    c = x.shape[0]
    pooled = np.zeros((n_roi, c, k_out), dtype=x.dtype)
    arg = np.full((n_roi, c, k_out), -1, dtype=np.int64)
    for r in range(n_roi):
        for j in range(k_out):
            lo, hi = bins[r, j]
            if lo < 0:
                continue
            seg = x[:, lo:hi]
            idx = np.argmax(seg, axis=1)
            pooled[r, :, j] = seg[np.arange(c), idx]
            arg[r, :, j] = lo + idx
    return pooled, arg


def roi_pool_backward(grad, argmax, n_cells):
    g = np.asarray(grad)
    n_roi, c, k_out = g.shape
    dx = np.zeros((c, n_cells), dtype=g.dtype)
    chan = np.broadcast_to(np.arange(c)[None, :, None], g.shape)
    valid = argmax >= 0
    np.add.at(dx, (chan[valid], argmax[valid]), g[valid])
    return dx


def greedy_match(iou, order, det_cls, truth_cls, iou_min, classful):
    """Greedy detection-to-truth assignment.

    ``order`` lists detection rows by descending score. Each detection takes the
    unmatched truth of highest IoU above ``iou_min``. In classful mode a
    class mismatch still consumes the truth but leaves both unmatched, so
    misclassification can only remove matches. Returns
    ``(det_to_truth, det_iou)`` with -1 for unmatched detections.
    """
    n_det, n_truth = iou.shape
    det_to_truth = np.full(n_det, -1, dtype=np.int64)
    det_iou = np.zeros(n_det, dtype=np.float64)
    taken = np.zeros(n_truth, dtype=bool)
    for d in order:
        best = -1
        best_iou = iou_min
        for t in range(n_truth):
            if taken[t] or iou[d, t] <= best_iou:
                continue
            best = t
            best_iou = iou[d, t]
        if best < 0:
            continue
        taken[best] = True
        if classful and det_cls[d] != truth_cls[best]:
            continue
        det_to_truth[d] = best
        det_iou[d] = best_iou
    return det_to_truth, det_iou
