import numpy as np
import pytest
from hypothesis import given, strategies as st

from rfsense import frcnn, geometry as geo, synth
from rfsense.errors import ConfigurationError, InputError
from rfsense.frcnn import FeatureExtractorConfig, FRCNN1D, ModelConfig, TrainConfig

TINY = ModelConfig(FeatureExtractorConfig(width_divisor=8))


@pytest.fixture(scope="module")
def records():
    return synth.generate_records(50, (5, 20), seed=2)


@pytest.fixture(scope="module")
def tiny():
    return FRCNN1D(TINY, seed=0)


@pytest.mark.parametrize("stride,channels", [(2, 64), (4, 128), (8, 256), (16, 512), (32, 512)])
def test_vgg_table_feature_shapes(stride, channels):
    cfg = FeatureExtractorConfig(stride=stride)
    ext = frcnn.build_extractor(cfg, np.random.default_rng(0))
    out = ext.forward(frcnn.standardize(np.random.default_rng(1).standard_normal(1024)))
    assert out.shape == (1, channels, 1024 // stride)


@pytest.mark.parametrize("family", frcnn.FAMILIES)
def test_families_fully_convolutional(family):
    cfg = FeatureExtractorConfig(family=family, stride=8, width_divisor=8)
    ext = frcnn.build_extractor(cfg, np.random.default_rng(0))
    x = np.random.default_rng(1).standard_normal(2048)
    short = ext.forward(frcnn.standardize(x[:1024]))
    long = ext.forward(frcnn.standardize(x))
    assert short.shape == (1, cfg.filters_out, 128)
    assert long.shape == (1, cfg.filters_out, 256)


def test_downscaled_widths():
    m = ModelConfig(FeatureExtractorConfig(downscaled=True))
    assert (m.rpn_depth, m.fc_width) == (128, 2048)
    full = ModelConfig()
    assert (full.rpn_depth, full.fc_width) == (512, 4096)


def test_config_rejects():
    with pytest.raises(ConfigurationError):
        FeatureExtractorConfig(family="resnet50")
    with pytest.raises(ConfigurationError):
        FeatureExtractorConfig(stride=3)
    with pytest.raises(ConfigurationError):
        ModelConfig(num_classes=2, class_names=("a",))
    with pytest.raises(ConfigurationError):
        TrainConfig(rpn_overlap_min=0.8)


def test_rpn_shapes(tiny):
    feats = tiny.extract_features(np.zeros(1024))
    logits, regs = tiny.rpn_forward(feats)
    assert logits.shape == (64, 5)
    assert regs.reshape(64, -1).shape == (64, 10)
    np.testing.assert_array_equal(frcnn.extract_features(np.zeros(1024), tiny), feats[0].T)


def test_zero_rpn_head_gives_half(tiny):
    m = FRCNN1D(TINY, seed=0)
    for p in m.rpn_cls.params.values():
        p[...] = 0
    logits, _ = m.rpn_forward(m.extract_features(np.random.default_rng(0).standard_normal(1024)))
    np.testing.assert_array_equal(frcnn.sigmoid(np.asarray(logits, dtype=np.float64)), 0.5)


def test_wrong_input_size(tiny):
    with pytest.raises(InputError):
        tiny.extract_features(np.zeros(512))


def test_proposals_rank_dominant_anchor_first():
    grid = geo.generate_anchors(1024, 16)
    scores = np.full(len(grid), 0.1)
    scores[123] = 0.99
    boxes, s = frcnn.propose_arrays(scores, np.zeros((len(grid), 2)), grid, top_n=64)
    np.testing.assert_allclose(boxes[0], grid.anchors[123])
    assert s[0] == 0.99 and len(boxes) <= 64


def test_equal_scores_follow_tie_break():
    grid = geo.generate_anchors(1024, 16)
    boxes, _ = frcnn.propose_arrays(np.full(len(grid), 0.5), np.zeros((len(grid), 2)), grid, top_n=10, nms_overlap=0.999)
    starts = boxes[:, 0]
    assert np.all(np.diff(starts) >= 0) and len(boxes) == 10


def test_untrained_head_near_uniform_and_zero_regression(tiny):
    feats = tiny.extract_features(np.random.default_rng(3).standard_normal(1024))
    props = np.array([[100.0, 180.0], [400.0, 420.0]])
    logits, _ = tiny.classifier_forward(feats, props)
    probs = frcnn.softmax(np.asarray(logits, dtype=np.float64))
    assert np.max(np.abs(probs - 0.5)) < 0.1
    m = FRCNN1D(TINY, seed=0)
    for p in m.reg_out.params.values():
        p[...] = 0
    boxes, _, _ = m.classify(feats, props)
    np.testing.assert_allclose(boxes, props)


def test_pmin_monotone(tiny, records):
    spec = records[0].spectrum
    prev = None
    for p in (0.0, 0.3, 0.5, 0.7, 0.9):
        n = len(tiny.detect(spec, p_min=p))
        assert prev is None or n <= prev
        prev = n


@given(n_pos=st.integers(0, 300), n_neg=st.integers(0, 300), batch=st.integers(2, 256), seed=st.integers(0, 99))
def test_anchor_sampling_at_most_half_positive(n_pos, n_neg, batch, seed):
    labels = np.array([geo.POSITIVE] * n_pos + [geo.NEGATIVE] * n_neg + [geo.IGNORE] * 7)
    np.random.default_rng(seed).shuffle(labels)
    sel = frcnn.sample_anchors(labels, batch, np.random.default_rng(seed))
    pos = np.sum(labels[sel] == geo.POSITIVE)
    assert pos <= batch // 2 and sel.size <= batch
    assert np.all(labels[sel] != geo.IGNORE)
    assert len(set(sel.tolist())) == sel.size


def test_roi_sampling_fraction_and_targets():
    truths = np.array([[100.0, 200.0]])
    props = np.array([[100.0, 200.0]] * 40 + [[500.0, 600.0]] * 40)
    cfg = TrainConfig()
    rois, labels, targets = frcnn.sample_rois(props, truths, np.array([0]), cfg, np.random.default_rng(0), background=1)
    assert rois.shape[0] == 32 and np.sum(labels == 0) == 16
    np.testing.assert_allclose(targets, 0.0)


def test_smoke_training_loss_decreases(records):
    cfg = TrainConfig(epochs=2, epoch_length=50, lr=1e-4, seed=0)
    _, hist = frcnn.train_alternating(records, cfg, model_config=TINY)
    assert hist[1].rpn_cls_loss < hist[0].rpn_cls_loss
    assert all(np.isfinite(v) for h in hist for v in (h.rpn_cls_loss, h.rpn_reg_loss, h.cls_loss, h.reg_loss))


def test_training_replay_and_checkpoint(records, tmp_path):
    cfg = TrainConfig(epochs=1, epoch_length=8, lr=1e-4, seed=4)
    m1, h1 = frcnn.train_alternating(records[:8], cfg, model_config=TINY)
    m2, h2 = frcnn.train_alternating(records[:8], cfg, model_config=TINY)
    assert h1 == h2
    frcnn.write_loss_csv(h1, tmp_path / "a.csv", "p")
    frcnn.write_loss_csv(h2, tmp_path / "b.csv", "p")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    m1.save(tmp_path / "m.ckpt")
    back = FRCNN1D.load(tmp_path / "m.ckpt")
    spec = records[9].spectrum
    a = m1.detect_arrays(spec, p_min=0.0)
    b = back.detect_arrays(spec, p_min=0.0)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)


def test_epoch_alternation_runs_one_stage(records):
    cfg = TrainConfig(epochs=2, epoch_length=3, lr=1e-4, alternation="epoch")
    _, hist = frcnn.train_alternating(records[:3], cfg, model_config=TINY)
    assert hist[0].cls_loss == 0 and hist[0].rpn_cls_loss > 0
    assert hist[1].rpn_cls_loss == 0 and hist[1].cls_loss > 0


def test_empty_training_set():
    with pytest.raises(InputError):
        frcnn.train_alternating([], TrainConfig(epochs=1, epoch_length=1), model_config=TINY)
