import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfsense import metrics as M
from rfsense.geometry import Detection, Interval

CUTOFFS = [0.1 * k for k in range(10)]


def disjoint_truths(rng, n):
    cuts = np.sort(rng.choice(np.arange(1, 100), 2 * n, replace=False))
    return cuts.reshape(-1, 2).astype(float)


def random_instance(rng):
    nt = int(rng.integers(0, 5))
    truths = disjoint_truths(rng, nt)
    tcls = rng.integers(0, 2, nt)
    dets = []
    for _ in range(int(rng.integers(0, 7))):
        if nt and rng.random() < 0.7:
            a, b = truths[rng.integers(nt)]
            w = b - a
            lo, hi = a + rng.uniform(-0.4, 0.4) * w, b + rng.uniform(-0.4, 0.4) * w
            if hi <= lo:
                hi = lo + 1
        else:
            lo = rng.uniform(0, 95)
            hi = lo + rng.uniform(1, 20)
        score = float(rng.choice([0.05, 0.3, 0.5, 0.75, 0.9, 1.0])) if rng.random() < 0.5 else float(rng.random())
        dets.append(Detection(Interval(lo, hi), int(rng.integers(0, 2)), score))
    return dets, truths, tcls


def oracle_iou(a, b):
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    return inter / ((a[1] - a[0]) + (b[1] - b[0]) - inter)


def oracle_match(dets, truths, tcls, classful):
    """Truth-centric matching. With disjoint truths each detection clears IoU 0.5 with at most one truth,
    so a truth is claimed by its highest-scoring qualifying detection (earliest on ties). A wrong-class
    claim in classful mode is zeroed."""
    hit, wrong = {}, set()
    for t, tr in enumerate(truths):
        best = None
        for d, det in enumerate(dets):
            v = oracle_iou((det.interval.start, det.interval.end), tr)
            if v > 0.5 and (best is None or det.score > dets[best].score):
                best = d
        if best is None:
            continue
        if classful and dets[best].class_id != tcls[t]:
            wrong.add(best)
        else:
            hit[best] = oracle_iou((dets[best].interval.start, dets[best].interval.end), tr)
    tp = len(hit)
    return hit, tp, len(dets) - tp, len(truths) - tp, len(wrong)


def oracle_ap(dets, truths, tcls, classful):
    hit = oracle_match(dets, truths, tcls, classful)[0]
    if len(truths) == 0:
        return 1.0 if not dets else 0.0
    order = sorted(range(len(dets)), key=lambda d: -dets[d].score)
    tp = fp = 0
    pr = []
    for d in order:
        if d in hit:
            tp += 1
        else:
            fp += 1
        pr.append((tp / (tp + fp), tp / len(truths)))
    total = 0.0
    for k in range(11):
        level = k / 10
        cands = [p for p, r in pr if r >= level - 1e-12]
        total += max(cands) if cands else 0.0
    return total / 11


def oracle_all(dets, truths, tcls, classful):
    hit, tp, fp, fn, mis = oracle_match(dets, truths, tcls, classful)
    aps = [oracle_ap([d for d in dets if d.score >= c], truths, tcls, classful) for c in CUTOFFS]
    rec = list(hit.values()) + [0.0] * (fp + fn)
    return {
        "map": sum(aps) / len(aps),
        "miou": sum(rec) / len(rec) if rec else None,
        "pd": tp / (tp + fn) if tp + fn else None,
        "pfa": (fp - mis) / (tp + fp) if tp + fp else 0.0,
        "pfa_strict": fp / (tp + fp) if tp + fp else 0.0,
    }


@pytest.mark.parametrize("classful", [False, True])
def test_against_bruteforce_oracle(classful):
    rng = np.random.default_rng(7 + classful)
    t0 = time.perf_counter()
    for _ in range(500):
        dets, truths, tcls = random_instance(rng)
        want = oracle_all(dets, truths, tcls, classful)
        frames = [M.FrameResult(dets, truths, tcls)]
        assert M.mean_ap(frames, CUTOFFS, classful=classful) == pytest.approx(want["map"], abs=1e-9)
        if want["miou"] is None:
            with pytest.raises(M.MetricUndefinedError):
                M.mean_iou(frames, classful=classful)
        else:
            assert M.mean_iou(frames, classful=classful) == pytest.approx(want["miou"], abs=1e-9)
        m = M.match_frames(frames, classful=classful)
        if want["pd"] is None:
            with pytest.raises(M.MetricUndefinedError):
                M.prob_detection(m)
        else:
            assert M.prob_detection(m) == pytest.approx(want["pd"], abs=1e-9)
        assert M.prob_false_alarm(m) == pytest.approx(want["pfa"], abs=1e-9)
        assert M.prob_false_alarm(m, misclassified_as_false_alarm=True) == pytest.approx(want["pfa_strict"], abs=1e-9)
    assert time.perf_counter() - t0 < 30


def test_empty_denominators():
    assert M.precision(0, 0) == 1.0
    assert M.recall(0, 0) == 0.0
    assert M.prob_false_alarm(M.Counts(0, 0, 3)) == 0.0
    with pytest.raises(M.MetricUndefinedError):
        M.prob_detection(M.Counts(0, 4, 0))
    assert M.interpolated_ap([M.FrameResult([], np.zeros((0, 2)))]) == 1.0
    assert M.interpolated_ap([M.FrameResult([Detection(Interval(0, 5))], np.zeros((0, 2)))]) == 0.0
    assert M.interpolated_ap([M.FrameResult([], [(0, 5)])]) == 0.0


def test_duplicates_and_misses_score_zero():
    truths = [(0, 10), (50, 60)]
    dets = [Detection(Interval(0, 10), 0, 0.9), Detection(Interval(1, 10), 0, 0.8), Detection(Interval(80, 90), 0, 0.7)]
    m = M.match_detections(dets, truths)
    assert (m.tp, m.fp, m.fn) == (1, 2, 1)
    assert M.mean_iou([M.FrameResult(dets, truths)]) == pytest.approx(1.0 / 4)


def test_wrong_class_counts_as_fp_and_miss():
    truths, tcls = [(0, 10)], [1]
    dets = [Detection(Interval(0, 10), 0, 0.9)]
    assert M.match_detections(dets, truths, tcls, classful=False).tp == 1
    m = M.match_detections(dets, truths, tcls, classful=True)
    assert (m.tp, m.fp, m.fn) == (0, 1, 1) and m.misclassified == [0]
    assert M.prob_false_alarm(m) == 0.0
    assert M.prob_false_alarm(m, misclassified_as_false_alarm=True) == 1.0
    assert M.mean_iou([M.FrameResult(dets, truths, tcls)], classful=True) == 0.0


def test_perfect_detector_ap_one():
    frames = [M.FrameResult([Detection(Interval(a, b), 0, 0.95)], [(a, b)]) for a, b in [(0, 10), (20, 40), (5, 6)]]
    assert M.mean_ap(frames) == pytest.approx(1.0)
    r = M.evaluate_frames(frames, "x", 20.0)
    assert (r.map, r.miou, r.pd, r.pfa) == (pytest.approx(1.0), 1.0, 1.0, 0.0)


@given(st.integers(0, 2**32 - 1))
def test_classful_never_beats_classless(seed):
    rng = np.random.default_rng(seed)
    dets, truths, tcls = random_instance(rng)
    frames = [M.FrameResult(dets, truths, tcls)]
    if not dets and not len(truths):
        return
    assert M.mean_iou(frames, classful=True) <= M.mean_iou(frames) + 1e-12
    mc, ml = M.match_frames(frames, classful=True), M.match_frames(frames)
    assert M.prob_false_alarm(mc) <= M.prob_false_alarm(ml) + 1e-12
    assert M.prob_false_alarm(mc, True) >= M.prob_false_alarm(ml) - 1e-12


@given(st.integers(0, 2**32 - 1), st.floats(0, 1), st.floats(0, 1))
def test_raising_cutoff_never_adds_detections(seed, a, b):
    rng = np.random.default_rng(seed)
    dets, truths, _ = random_instance(rng)
    lo, hi = sorted((a, b))
    f = [M.FrameResult(dets, truths)]
    assert len(M.filter_frames(f, hi)[0].detections) <= len(M.filter_frames(f, lo)[0].detections)


def test_timing_report_normalizes_to_slowest():
    out = M.timing_report({"energy": 5e-4, "frcnn": 0.25})
    assert out == {"energy": pytest.approx(0.002), "frcnn": 1.0}
    with pytest.raises(ValueError):
        M.timing_report({"only": 1.0})
    mean, std = M.time_inference(lambda x: x, [1, 2, 3], repeat=3)
    assert mean >= 0 and std >= 0


def test_report_csv(tmp_path):
    r = M.EvalReport("energy", -5.0, 3, 0.5, 0.25, 0.75, 0.1, 3, 1, 1, 0.001)
    p = tmp_path / "r.csv"
    M.write_reports_csv([r, r], p, "rfsense eval")
    lines = p.read_text().splitlines()
    assert lines[0] == "# rfsense eval"
    assert lines[1].split(",") == M.REPORT_FIELDS
    assert len(lines) == 4
    assert "average" in M.summary_text([r, r])
