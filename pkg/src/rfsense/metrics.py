"""Detection metrics: matching, precision/recall, interpolated AP, mAP, mIoU, Pd, Pfa, timing.

A detection is a true positive when it is the highest-scoring detection to
claim a ground truth with IoU above 0.5. In classful mode a claim with the
wrong class still uses up the truth but counts as a false positive (IoU 0)
and leaves the truth missed. Everything else is a false positive; truths
left unclaimed are false negatives.

Pfa is the share of detections that are false positives. By default a
wrong-class claim on a truth is not a false alarm (only detections over
noise and duplicates are); pass ``misclassified_as_false_alarm=True`` to
count it.

Conventions for empty denominators: precision 0/0 = 1.0, recall 0/0 = 0.0,
Pfa with no detections = 0.0. Pd and mIoU are undefined without truths or
recordings and raise :class:`MetricUndefinedError`.
"""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import kernels
from .geometry import Detection, as_interval_array

DEFAULT_MAP_THRESHOLDS = tuple(round(0.1 * k, 1) for k in range(10))


class MetricUndefinedError(ValueError):
    pass


@dataclass
class FrameResult:
    """Detections and ground truth for one frame."""

    detections: list
    truths: np.ndarray
    truth_classes: np.ndarray | None = None

    def __post_init__(self):
        self.truths = as_interval_array(self.truths)
        if self.truth_classes is None:
            self.truth_classes = np.zeros(self.truths.shape[0], dtype=np.int64)
        else:
            self.truth_classes = np.asarray(self.truth_classes, dtype=np.int64).reshape(-1)


@dataclass
class MatchResult:
    matched: list  # (det_index, truth_index, iou)
    false_positives: list  # det indices
    false_negatives: list  # truth indices
    n_detections: int = 0
    n_truths: int = 0
    misclassified: list = field(default_factory=list)  # det indices, also in false_positives

    @property
    def tp(self) -> int:
        return len(self.matched)

    @property
    def fp(self) -> int:
        return len(self.false_positives)

    @property
    def fn(self) -> int:
        return len(self.false_negatives)


@dataclass
class Counts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    mis: int = 0  # wrong-class claims, a subset of fp

    def __add__(self, other):
        return Counts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.mis + other.mis)


@dataclass
class EvalReport:
    method: str
    snr_db: float
    n_frames: int
    map: float
    miou: float
    pd: float
    pfa: float
    tp: int
    fp: int
    fn: int
    mean_inference_s: float = float("nan")
    extra: dict = field(default_factory=dict)


def _det_arrays(dets: Sequence[Detection]):
    iv = as_interval_array([d.interval for d in dets])
    scores = np.asarray([d.score for d in dets], dtype=np.float64)
    classes = np.asarray([d.class_id for d in dets], dtype=np.int64)
    return iv, scores, classes


def _score_order(scores: np.ndarray) -> np.ndarray:
    return np.argsort(-scores, kind="stable")


def match_detections(dets: Sequence[Detection], truths, truth_classes=None, iou_min: float = 0.5,
                     classful: bool = False) -> MatchResult:
    """Greedy matching in descending score order (see module docstring)."""
    dets = list(dets)
    tr = as_interval_array(truths)
    tcls = np.zeros(tr.shape[0], dtype=np.int64) if truth_classes is None else np.asarray(truth_classes, dtype=np.int64)
    if not dets:
        return MatchResult([], [], list(range(tr.shape[0])), 0, tr.shape[0])
    iv, scores, dcls = _det_arrays(dets)
    ious = kernels.iou_matrix(iv, tr) if tr.shape[0] else np.zeros((len(dets), 0))
    d2t, d_iou = kernels.greedy_match(ious, _score_order(scores), dcls, tcls, iou_min, False)
    wrong = [d for d in range(len(dets)) if d2t[d] >= 0 and classful and dcls[d] != tcls[d2t[d]]]
    d2t[wrong] = -1
    matched = [(int(d), int(d2t[d]), float(d_iou[d])) for d in range(len(dets)) if d2t[d] >= 0]
    fps = [d for d in range(len(dets)) if d2t[d] < 0]
    claimed = set(int(t) for t in d2t if t >= 0)
    fns = [t for t in range(tr.shape[0]) if t not in claimed]
    return MatchResult(matched, fps, fns, len(dets), tr.shape[0], wrong)


def match_frames(frames: Iterable[FrameResult], iou_min: float = 0.5, classful: bool = False) -> list:
    return [match_detections(f.detections, f.truths, f.truth_classes, iou_min, classful) for f in frames]


def total_counts(matches: Iterable[MatchResult]) -> Counts:
    c = Counts()
    for m in matches:
        c = c + Counts(m.tp, m.fp, m.fn, len(m.misclassified))
    return c


def precision(tp: int, fp: int) -> float:
    return 1.0 if tp + fp == 0 else tp / (tp + fp)


def recall(tp: int, fn: int) -> float:
    return 0.0 if tp + fn == 0 else tp / (tp + fn)


def pr_curve(frames: Sequence[FrameResult], iou_min: float = 0.5, classful: bool = False):
    """Cumulative precision/recall after each detection, sorted by descending score.

    Returns ``(scores, precision, recall, n_truths)``.
    """
    frames = list(frames)
    n_truths = sum(f.truths.shape[0] for f in frames)
    scores, hits = [], []
    for f in frames:
        m = match_detections(f.detections, f.truths, f.truth_classes, iou_min, classful)
        tp_idx = {d for d, _, _ in m.matched}
        for k, d in enumerate(f.detections):
            scores.append(d.score)
            hits.append(k in tp_idx)
    scores = np.asarray(scores, dtype=np.float64)
    hits = np.asarray(hits, dtype=bool)
    order = _score_order(scores)
    hits = hits[order]
    tp = np.cumsum(hits)
    fp = np.cumsum(~hits)
    prec = tp / np.maximum(tp + fp, 1)
    rec = tp / n_truths if n_truths else np.zeros_like(prec, dtype=np.float64)
    return scores[order], prec, rec, n_truths


def interpolated_ap(frames: Sequence[FrameResult], points: int = 11, iou_min: float = 0.5,
                    classful: bool = False) -> float:
    """Mean over ``points`` evenly spaced recall levels of the max precision at recall >= level.

    With no ground truth at all, AP is 1.0 when there are also no detections
    and 0.0 otherwise.
    """
    _, prec, rec, n_truths = pr_curve(frames, iou_min, classful)
    if n_truths == 0:
        return 1.0 if prec.size == 0 else 0.0
    if prec.size == 0:
        return 0.0
    total = 0.0
    for level in np.linspace(0.0, 1.0, points):
        mask = rec >= level - 1e-12
        total += prec[mask].max() if np.any(mask) else 0.0
    return total / points


def filter_frames(frames: Sequence[FrameResult], cutoff: float) -> list:
    return [FrameResult([d for d in f.detections if d.score >= cutoff], f.truths, f.truth_classes) for f in frames]


def mean_ap(frames: Sequence[FrameResult], thresholds: Sequence[float] = DEFAULT_MAP_THRESHOLDS,
            points: int = 11, iou_min: float = 0.5, classful: bool = False) -> float:
    frames = list(frames)
    if not thresholds:
        raise ValueError("at least one probability cutoff is required")
    aps = [interpolated_ap(filter_frames(frames, c), points, iou_min, classful) for c in thresholds]
    return float(np.mean(aps))


def iou_recordings(matches: Iterable[MatchResult]) -> list:
    """Matched IoU per TP, 0.0 per FP (duplicates included) and per missed truth."""
    rec = []
    for m in matches:
        rec.extend(iou for _, _, iou in m.matched)
        rec.extend([0.0] * (m.fp + m.fn))
    return rec


def mean_iou(frames: Sequence[FrameResult], iou_min: float = 0.5, classful: bool = False) -> float:
    rec = iou_recordings(match_frames(frames, iou_min, classful))
    if not rec:
        raise MetricUndefinedError("mIoU undefined: no detections and no ground truth")
    return float(np.mean(rec))


def _counts(match) -> Counts:
    if isinstance(match, Counts):
        return match
    if isinstance(match, MatchResult):
        return Counts(match.tp, match.fp, match.fn, len(match.misclassified))
    return total_counts(match)


def prob_detection(match) -> float:
    """True positive rate over a MatchResult, a list of them, or Counts."""
    c = _counts(match)
    if c.tp + c.fn == 0:
        raise MetricUndefinedError("Pd undefined: no ground truth")
    return c.tp / (c.tp + c.fn)


def prob_false_alarm(match, misclassified_as_false_alarm: bool = False) -> float:
    """False alarms over all detections; wrong-class claims count only when asked."""
    c = _counts(match)
    n_det = c.tp + c.fp
    alarms = c.fp if misclassified_as_false_alarm else c.fp - c.mis
    return 0.0 if n_det == 0 else alarms / n_det


def evaluate_frames(frames: Sequence[FrameResult], method: str = "", snr_db: float = float("nan"),
                    classful: bool = False, thresholds: Sequence[float] = DEFAULT_MAP_THRESHOLDS,
                    mean_inference_s: float = float("nan")) -> EvalReport:
    frames = list(frames)
    matches = match_frames(frames, classful=classful)
    c = total_counts(matches)
    rec = iou_recordings(matches)
    return EvalReport(
        method=method,
        snr_db=snr_db,
        n_frames=len(frames),
        map=mean_ap(frames, thresholds, classful=classful),
        miou=float(np.mean(rec)) if rec else float("nan"),
        pd=c.tp / (c.tp + c.fn) if c.tp + c.fn else float("nan"),
        pfa=prob_false_alarm(c),
        tp=c.tp,
        fp=c.fp,
        fn=c.fn,
        mean_inference_s=mean_inference_s,
    )


def time_inference(fn: Callable, inputs: Sequence, repeat: int = 1) -> tuple:
    """Mean and std (over repeats) of the per-input wall-clock time of ``fn``.

    Only the calls to ``fn`` are timed; any preprocessing must happen before.
    """
    per_rep = []
    for _ in range(max(1, repeat)):
        t0 = time.perf_counter()
        for x in inputs:
            fn(x)
        per_rep.append((time.perf_counter() - t0) / max(1, len(inputs)))
    arr = np.asarray(per_rep)
    return float(arr.mean()), float(arr.std())


def timing_report(mean_seconds: dict) -> dict:
    """Normalize per-method mean times by the slowest method."""
    if len(mean_seconds) < 2:
        raise ValueError("timing report needs at least two methods")
    slowest = max(mean_seconds.values())
    if not slowest > 0:
        raise ValueError("slowest method has non-positive time")
    return {k: v / slowest for k, v in mean_seconds.items()}


REPORT_FIELDS = ["method", "snr_db", "n_frames", "map", "miou", "pd", "pfa", "tp", "fp", "fn", "mean_inference_s"]


def _fmt(v):
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(round(v, 12))
    return str(v)


def write_reports_csv(reports: Sequence[EvalReport], path, provenance: str = "",
                      fields: Sequence[str] = REPORT_FIELDS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(fields)
        for r in reports:
            d = asdict(r)
            w.writerow([_fmt(d[k]) for k in fields])


def write_pr_csv(frames: Sequence[FrameResult], path, provenance: str = "", classful: bool = False) -> None:
    scores, prec, rec, _ = pr_curve(frames, classful=classful)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["score", "precision", "recall"])
        for s, p, r in zip(scores, prec, rec):
            w.writerow([_fmt(float(s)), _fmt(float(p)), _fmt(float(r))])


def summary_text(reports: Sequence[EvalReport]) -> str:
    lines = [f"{'method':<12}{'snr':>6}{'mAP':>8}{'mIoU':>8}{'Pd':>8}{'Pfa':>8}"]
    for r in reports:
        lines.append(f"{r.method:<12}{r.snr_db:>6g}{r.map:>8.3f}{r.miou:>8.3f}{r.pd:>8.3f}{r.pfa:>8.3f}")
    vals = lambda k: [getattr(r, k) for r in reports if not math.isnan(getattr(r, k))]  # noqa: E731
    if len(reports) > 1:
        lines.append(
            f"{'average':<12}{'':>6}"
            + "".join(f"{np.mean(vals(k)) if vals(k) else float('nan'):>8.3f}" for k in ("map", "miou", "pd", "pfa"))
        )
    return "\n".join(lines)
