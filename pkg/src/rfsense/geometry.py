"""Interval geometry shared by every detector.

Intervals are half-open ``[start, end)`` in frequency-bin units. Scalar
helpers take :class:`Interval`; the vectorized helpers take ``(n, 2)`` arrays.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, DegenerateInputError

DEFAULT_SCALES = (32, 64, 128, 256, 512)

POSITIVE = 1
NEGATIVE = 0
IGNORE = -1


@dataclass(frozen=True, order=True)
class Interval:
    start: float
    end: float

    @property
    def length(self) -> float:
        return self.end - self.start

    @property
    def center(self) -> float:
        return 0.5 * (self.start + self.end)

    def as_tuple(self):
        return (self.start, self.end)


@dataclass(frozen=True)
class Detection:
    interval: Interval
    class_id: int = 0
    score: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ConfigurationError(f"score must lie in [0, 1], got {self.score}")


@dataclass
class AnchorGrid:
    input_size: int
    stride: int
    scales: tuple
    anchors: np.ndarray  # (positions * len(scales), 2), position-major

    @property
    def positions(self) -> int:
        return self.input_size // self.stride

    @property
    def k(self) -> int:
        return len(self.scales)

    def __len__(self):
        return self.anchors.shape[0]


@dataclass
class RpnTargets:
    labels: np.ndarray  # per anchor: POSITIVE / NEGATIVE / IGNORE
    regressions: np.ndarray  # (n_anchors, 2); zero where label != POSITIVE
    matched_truth: np.ndarray = field(default=None)  # best-IoU truth index, -1 if none


def as_interval_array(intervals) -> np.ndarray:
    if isinstance(intervals, np.ndarray):
        return intervals.astype(np.float64, copy=False).reshape(-1, 2)
    rows = [iv.as_tuple() if isinstance(iv, Interval) else tuple(iv) for iv in intervals]
    return np.asarray(rows, dtype=np.float64).reshape(-1, 2)


def iou(a: Interval, b: Interval) -> float:
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = a.length + b.length - inter
    return inter / union if union > 0 else 0.0


def iou_matrix(a, b) -> np.ndarray:
    return kernels.iou_matrix(as_interval_array(a), as_interval_array(b))


def generate_anchors(input_size: int, stride: int, scales: Sequence[int] = DEFAULT_SCALES) -> AnchorGrid:
    """One anchor per (position, scale), centered at ``(i + 0.5) * stride`` and clipped."""
    if stride <= 0 or input_size % stride != 0:
        raise ConfigurationError(f"stride {stride} must divide input size {input_size}")
    if not scales:
        raise ConfigurationError("at least one anchor scale is required")
    n = input_size // stride
    centers = (np.arange(n) + 0.5) * stride
    half = np.asarray(scales, dtype=np.float64) / 2.0
    start = (centers[:, None] - half[None, :]).ravel()
    end = (centers[:, None] + half[None, :]).ravel()
    anchors = np.clip(np.stack([start, end], axis=1), 0.0, float(input_size))
    return AnchorGrid(input_size, stride, tuple(scales), anchors)


def encode_regression(anchors, truths) -> np.ndarray:
    """``t_c = (c_truth - c_anchor) / len_anchor``, ``t_w = ln(len_truth / len_anchor)``.

    Accepts a single pair of intervals (returns shape ``(2,)``) or aligned
    ``(n, 2)`` arrays (returns ``(n, 2)``).
    """
    single = isinstance(anchors, Interval)
    a = as_interval_array([anchors] if single else anchors)
    t = as_interval_array([truths] if isinstance(truths, Interval) else truths)
    la = a[:, 1] - a[:, 0]
    lt = t[:, 1] - t[:, 0]
    if np.any(la <= 0):
        raise DegenerateInputError("anchor with non-positive length")
    if np.any(lt <= 0):
        raise DegenerateInputError("truth with non-positive length")
    tc = (0.5 * (t[:, 0] + t[:, 1]) - 0.5 * (a[:, 0] + a[:, 1])) / la
    tw = np.log(lt / la)
    out = np.stack([tc, tw], axis=1)
    return out[0] if single else out


def decode_regression(anchors, deltas, input_size: float | None = None, clip_log: float = 4.0):
    """Inverse of :func:`encode_regression`; clips to ``[0, input_size]`` when given.

    ``t_w`` is capped at ``clip_log`` to keep ``exp`` finite on untrained outputs.
    """
    single = isinstance(anchors, Interval)
    a = as_interval_array([anchors] if single else anchors)
    d = np.asarray(deltas, dtype=np.float64).reshape(-1, 2)
    la = a[:, 1] - a[:, 0]
    center = 0.5 * (a[:, 0] + a[:, 1]) + d[:, 0] * la
    length = la * np.exp(np.minimum(d[:, 1], clip_log))
    out = np.stack([center - 0.5 * length, center + 0.5 * length], axis=1)
    if input_size is not None:
        out = np.clip(out, 0.0, float(input_size))
    if single:
        return Interval(float(out[0, 0]), float(out[0, 1]))
    return out


def assign_rpn_targets(grid: AnchorGrid, truths, overlap_min: float = 0.3, overlap_max: float = 0.7) -> RpnTargets:
    """Label anchors positive (IoU > max), negative (IoU < min everywhere) or ignore.

    The highest-IoU anchor(s) of each truth are forced positive.
    """
    anchors = grid.anchors
    n = anchors.shape[0]
    truths = as_interval_array(truths)
    labels = np.full(n, IGNORE, dtype=np.int64)
    regs = np.zeros((n, 2), dtype=np.float64)
    matched = np.full(n, -1, dtype=np.int64)
    if truths.shape[0] == 0:
        labels[:] = NEGATIVE
        return RpnTargets(labels, regs, matched)
    ious = kernels.iou_matrix(anchors, truths)
    best_truth = np.argmax(ious, axis=1)
    best_iou = ious[np.arange(n), best_truth]
    labels[best_iou < overlap_min] = NEGATIVE
    labels[best_iou > overlap_max] = POSITIVE
    col_max = ious.max(axis=0)
    for t in range(truths.shape[0]):
        if col_max[t] <= 0:
            continue
        rows = np.flatnonzero(ious[:, t] == col_max[t])
        labels[rows] = POSITIVE
        # a forced anchor regresses to the truth it was forced for unless it overlaps another better
        best_truth[rows] = np.where(best_iou[rows] > col_max[t], best_truth[rows], t)
    pos = labels == POSITIVE
    matched[pos] = best_truth[pos]
    if np.any(pos):
        regs[pos] = encode_regression(anchors[pos], truths[best_truth[pos]])
    return RpnTargets(labels, regs, matched)


def _sort_order(intervals: np.ndarray, scores: np.ndarray) -> np.ndarray:
    # descending score, ties by ascending start
    return np.lexsort((intervals[:, 0], -scores))


def nms_arrays(intervals, scores, classes=None, overlap: float = 0.5) -> np.ndarray:
    """Indices kept by greedy per-class NMS, ordered by descending score."""
    if not 0.0 < overlap < 1.0:
        raise ConfigurationError(f"overlap must lie in (0, 1), got {overlap}")
    iv = as_interval_array(intervals)
    sc = np.asarray(scores, dtype=np.float64).ravel()
    cls = np.zeros(sc.size, dtype=np.int64) if classes is None else np.asarray(classes, dtype=np.int64)
    if sc.size == 0:
        return np.zeros(0, dtype=np.int64)
    order = _sort_order(iv, sc)
    keep = kernels.nms_sorted(iv[order], cls[order], overlap)
    return order[keep]


def nms(dets: Iterable[Detection], overlap: float = 0.5) -> list[Detection]:
    dets = list(dets)
    if not dets:
        if not 0.0 < overlap < 1.0:
            raise ConfigurationError(f"overlap must lie in (0, 1), got {overlap}")
        return []
    iv = as_interval_array([d.interval for d in dets])
    keep = nms_arrays(iv, [d.score for d in dets], [d.class_id for d in dets], overlap)
    return [dets[i] for i in keep]


def threshold_detections(dets: Iterable[Detection], p_min: float) -> list[Detection]:
    if not 0.0 <= p_min <= 1.0:
        raise ConfigurationError(f"p_min must lie in [0, 1], got {p_min}")
    return [d for d in dets if d.score >= p_min]
