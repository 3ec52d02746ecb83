import math
import time

import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfsense import geometry as geo
from rfsense.errors import ConfigurationError, DegenerateInputError
from rfsense.geometry import Detection, Interval

N_CASES = 10_000


def count_iou(a, b):
    """IoU of integer intervals by counting covered unit cells."""
    sa, sb = set(range(a[0], a[1])), set(range(b[0], b[1]))
    return len(sa & sb) / len(sa | sb)


def naive_nms(dets, overlap):
    order = sorted(range(len(dets)), key=lambda i: (-dets[i].score, dets[i].interval.start))
    kept = []
    for i in order:
        if all(dets[k].class_id != dets[i].class_id or geo.iou(dets[k].interval, dets[i].interval) <= overlap for k in kept):
            kept.append(i)
    return kept


def test_iou_examples():
    assert geo.iou(Interval(100, 200), Interval(150, 250)) == pytest.approx(50 / 150, abs=1e-12)
    assert geo.iou(Interval(3, 9), Interval(3, 9)) == 1.0
    assert geo.iou(Interval(0, 5), Interval(5, 9)) == 0.0


def test_iou_against_counting_oracle():
    rng = np.random.default_rng(0)
    t0 = time.perf_counter()
    a0 = rng.integers(0, 60, (N_CASES, 2))
    b0 = rng.integers(0, 60, (N_CASES, 2))
    a = np.stack([a0.min(1), a0.max(1) + 1], 1)
    b = np.stack([b0.min(1), b0.max(1) + 1], 1)
    fast = np.array([geo.iou_matrix(a[i : i + 1], b[i : i + 1])[0, 0] for i in range(N_CASES)])
    oracle = np.array([count_iou(a[i], b[i]) for i in range(N_CASES)])
    np.testing.assert_allclose(fast, oracle, atol=1e-12)
    sym = geo.iou_matrix(b, a).diagonal()
    np.testing.assert_allclose(geo.iou_matrix(a, b).diagonal(), sym, atol=0)
    assert np.all((fast >= 0) & (fast <= 1))
    equal = np.all(a == b, axis=1)
    assert np.all((fast == 1.0) == equal)
    disjoint = (a[:, 1] <= b[:, 0]) | (b[:, 1] <= a[:, 0])
    assert np.all((fast == 0.0) == disjoint)
    assert time.perf_counter() - t0 < 10


def test_encode_decode_roundtrip_bulk():
    rng = np.random.default_rng(1)
    s = rng.uniform(-50, 900, (N_CASES, 2))
    anchors = np.stack([s[:, 0], s[:, 0] + rng.uniform(0.5, 400, N_CASES)], 1)
    truths = np.stack([s[:, 1], s[:, 1] + rng.uniform(0.5, 400, N_CASES)], 1)
    t = geo.encode_regression(anchors, truths)
    back = geo.decode_regression(anchors, t, clip_log=np.inf)
    np.testing.assert_allclose(back, truths, atol=1e-9)


def test_encode_examples():
    np.testing.assert_allclose(geo.encode_regression(Interval(0, 100), Interval(50, 150)), [0.5, 0.0])
    np.testing.assert_allclose(geo.encode_regression(Interval(7, 19), Interval(7, 19)), [0.0, 0.0])
    out = geo.decode_regression(Interval(100, 164), (0.0, math.log(2)))
    assert out.length == pytest.approx(128) and out.center == pytest.approx(132)
    assert geo.decode_regression(Interval(10, 20), (0.0, 0.0)) == Interval(10, 20)
    with pytest.raises(DegenerateInputError):
        geo.encode_regression(Interval(5, 5), Interval(1, 2))


def test_decode_clips():
    out = geo.decode_regression(np.array([[0.0, 100.0]]), np.array([[-1.0, 1.0]]), input_size=1024)
    assert out[0, 0] == 0.0 and 0 < out[0, 1] <= 1024


def test_anchor_grid():
    g = geo.generate_anchors(1024, 16)
    assert g.positions == 64 and len(g) == 320 and g.k == 5
    np.testing.assert_array_equal(g.anchors[0], [0, 24])
    centers = (np.arange(64) + 0.5) * 16
    unclipped = g.anchors[2::5]  # scale 128 rows
    inner = (centers - 64 >= 0) & (centers + 64 <= 1024)
    np.testing.assert_allclose(unclipped[inner].mean(1), centers[inner])
    assert np.all((g.anchors >= 0) & (g.anchors <= 1024))
    with pytest.raises(ConfigurationError):
        geo.generate_anchors(1024, 1000)


def test_rpn_targets_examples():
    g = geo.generate_anchors(1024, 16)
    tgt = geo.assign_rpn_targets(g, [])
    assert np.all(tgt.labels == geo.NEGATIVE)
    a = g.anchors[5 * 20 + 2]
    tgt = geo.assign_rpn_targets(g, [tuple(a)])
    assert tgt.labels[5 * 20 + 2] == geo.POSITIVE
    np.testing.assert_allclose(tgt.regressions[5 * 20 + 2], [0, 0], atol=1e-12)


def test_rpn_target_ignore_band():
    grid = geo.AnchorGrid(200, 100, (100,), np.array([[0.0, 100.0], [100.0, 200.0]]))
    # anchor 0 only reaches IoU 0.5 but is the best anchor of truth 0, so it is forced positive
    tgt = geo.assign_rpn_targets(grid, [(0.0, 50.0), (100.0, 200.0)])
    assert tgt.labels.tolist() == [geo.POSITIVE, geo.POSITIVE]
    grid2 = geo.AnchorGrid(300, 100, (100,), np.array([[0.0, 100.0], [25.0, 125.0], [200.0, 300.0]]))
    tgt2 = geo.assign_rpn_targets(grid2, [(25.0, 125.0), (200.0, 300.0)])
    # anchor 0 has IoU 75/125 = 0.6 with truth 0 -> ignore
    assert tgt2.labels.tolist() == [geo.IGNORE, geo.POSITIVE, geo.POSITIVE]


def test_rpn_target_properties_bulk():
    rng = np.random.default_rng(2)
    g = geo.generate_anchors(1024, 16)
    for _ in range(300):
        n = rng.integers(1, 6)
        lo = rng.uniform(0, 1000, n)
        tr = np.stack([lo, np.minimum(lo + rng.uniform(4, 160, n), 1024)], 1)
        tgt = geo.assign_rpn_targets(g, tr)
        ious = geo.iou_matrix(g.anchors, tr)
        pos = tgt.labels == geo.POSITIVE
        for t in range(n):
            assert np.any(pos & (ious[:, t] > 0))
        assert np.all(ious[tgt.labels == geo.NEGATIVE].max(1) < 0.3)
        assert np.all(ious.max(1)[ious.max(1) > 0.7] > 0) and np.all(pos[ious.max(1) > 0.7])
        assert np.all(tgt.regressions[~pos] == 0)


def test_nms_examples():
    d = [Detection(Interval(0, 10), 0, 0.9), Detection(Interval(0, 10), 0, 0.8)]
    assert geo.nms(d, 0.5) == [d[0]]
    d = [Detection(Interval(0, 10), 0, 0.5), Detection(Interval(20, 30), 0, 0.9)]
    assert geo.nms(d, 0.5) == [d[1], d[0]]
    # chained suppression: B is removed by A, so C survives even though it overlaps B.
    # In 1D, IoU(A,B) > 0.5 and IoU(B,C) > 0.5 force A and C to intersect, so the chain runs at 0.2.
    a, b, c = Interval(0, 80), Interval(20, 100), Interval(80, 100)
    assert geo.iou(a, b) == pytest.approx(0.6) and geo.iou(b, c) == pytest.approx(0.25) and geo.iou(a, c) == 0
    dets = [Detection(a, 0, 0.9), Detection(b, 0, 0.8), Detection(c, 0, 0.7)]
    assert [k.interval for k in geo.nms(dets, 0.2)] == [a, c]
    with pytest.raises(ConfigurationError):
        geo.nms(dets, 1.5)


def test_nms_against_naive_bulk():
    rng = np.random.default_rng(3)
    for _ in range(2000):
        n = rng.integers(0, 9)
        lo = rng.integers(0, 50, n)
        dets = [
            Detection(Interval(float(l), float(l + w)), int(c), float(s))
            for l, w, c, s in zip(lo, rng.integers(1, 30, n), rng.integers(0, 2, n), np.round(rng.uniform(0, 1, n), 1))
        ]
        ov = float(rng.choice([0.3, 0.5, 0.7]))
        got = geo.nms(dets, ov)
        want = [dets[i] for i in naive_nms(dets, ov)]
        assert got == want
        assert geo.nms(got, ov) == got
        assert [g.score for g in got] == sorted((g.score for g in got), reverse=True)


@given(st.lists(st.tuples(st.floats(0, 900), st.floats(1, 120), st.floats(0, 1)), max_size=12), st.floats(0.05, 0.95))
def test_nms_idempotent(rows, ov):
    dets = [Detection(Interval(a, a + w), 0, s) for a, w, s in rows]
    once = geo.nms(dets, ov)
    assert geo.nms(once, ov) == once
    assert {d.score for d in once} <= {d.score for d in dets}


@given(st.floats(0, 1000), st.floats(0.1, 500), st.floats(0, 1000), st.floats(0.1, 500))
def test_iou_symmetric_bounded(a, wa, b, wb):
    x, y = Interval(a, a + wa), Interval(b, b + wb)
    v = geo.iou(x, y)
    assert v == geo.iou(y, x) and 0 <= v <= 1


def test_threshold_detections():
    d = [Detection(Interval(0, 1), 0, 0.95), Detection(Interval(2, 3), 0, 0.65)]
    assert geo.threshold_detections(d, 0.7) == d[:1]
    assert geo.threshold_detections(d, 0.0) == d
    with pytest.raises(ConfigurationError):
        geo.threshold_detections(d, 1.2)
    with pytest.raises(ConfigurationError):
        Detection(Interval(0, 1), 0, 1.5)
