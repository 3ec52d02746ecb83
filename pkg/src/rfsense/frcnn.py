"""1D Faster-RCNN: feature extractor, region proposal network, ROI classifier.

Pipeline: standardized dB spectrum -> fully convolutional backbone (stride s)
-> RPN (3-tap conv, then 1x1 objectness and 1x1 regression convs over k
anchor scales per feature cell) -> top proposals after NMS -> ROI max-pool to
7 cells -> two fully connected layers -> softmax over C classes + background
and per-class interval regression.

Training alternates two Adam steps per frame: one on the RPN losses, one on
the classifier losses. The backbone receives gradients from both.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import geometry as geo
from .errors import ConfigurationError, DivergenceError, InputError
from .geometry import AnchorGrid, Detection, Interval
from .nn import (
    AdamState,
    BatchNorm1d,
    Conv1d,
    Layer,
    Linear,
    MaxPool1d,
    ParameterTable,
    ReLU,
    RoiPool1d,
    Sequential,
    adam_step,
    load_checkpoint,
    save_checkpoint,
    sigmoid,
    sigmoid_binary_crossentropy,
    smooth_l1,
    softmax,
    softmax_crossentropy,
)

log = logging.getLogger(__name__)

# output filters per downscale factor
VGG_FILTERS = {2: 64, 4: 128, 8: 256, 16: 512, 32: 512}
BLOCK_FILTERS = (64, 128, 256, 512, 512)
FAMILIES = ("vgg", "vgg_skip", "signal")
# classifier regression targets are divided by these before the loss
CLS_REG_STD = np.array([0.1, 0.2])


@dataclass
class FeatureExtractorConfig:
    family: str = "vgg"
    stride: int = 16
    downscaled: bool = False
    width_divisor: int = 1
    signal_kernel: int = 7

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(f"unknown backbone family {self.family!r}; choose from {FAMILIES}")
        if self.stride not in VGG_FILTERS:
            raise ConfigurationError(f"stride must be one of {sorted(VGG_FILTERS)}, got {self.stride}")
        if self.width_divisor < 1:
            raise ConfigurationError("width_divisor must be >= 1")

    @property
    def n_pool(self) -> int:
        return int(round(math.log2(self.stride)))

    def block_filters(self) -> list:
        return [max(1, f // self.width_divisor) for f in BLOCK_FILTERS[: self.n_pool]]

    @property
    def filters_out(self) -> int:
        return max(1, VGG_FILTERS[self.stride] // self.width_divisor)


@dataclass
class ModelConfig:
    extractor: FeatureExtractorConfig = field(default_factory=FeatureExtractorConfig)
    input_size: int = 1024
    anchor_scales: tuple = geo.DEFAULT_SCALES
    num_classes: int = 1
    class_names: tuple = ("signal",)
    roi_len: int = 7
    rpn_depth: int | None = None
    fc_width: int | None = None

    def __post_init__(self):
        if isinstance(self.extractor, dict):
            self.extractor = FeatureExtractorConfig(**self.extractor)
        self.anchor_scales = tuple(int(s) for s in self.anchor_scales)
        self.class_names = tuple(self.class_names)
        if self.input_size % self.extractor.stride:
            raise ConfigurationError(f"stride {self.extractor.stride} must divide input size {self.input_size}")
        if self.num_classes < 1 or len(self.class_names) != self.num_classes:
            raise ConfigurationError("num_classes must be >= 1 and match class_names")
        div = self.extractor.width_divisor
        if self.rpn_depth is None:
            self.rpn_depth = max(1, (128 if self.extractor.downscaled else 512) // div)
        if self.fc_width is None:
            self.fc_width = max(1, (2048 if self.extractor.downscaled else 4096) // div)


@dataclass
class TrainConfig:
    epochs: int = 20
    epoch_length: int = 10000
    rpn_overlap_min: float = 0.3
    rpn_overlap_max: float = 0.7
    nms_overlap: float = 0.5
    lr: float = 1e-5
    seed: int = 0
    rpn_batch: int = 128
    roi_batch: int = 32
    roi_fg_fraction: float = 0.5
    classifier_iou: float = 0.5
    train_proposals: int = 256
    proposal_nms: float = 0.7
    alternation: str = "sample"  # or "epoch"
    include_truth_rois: bool = True

    def __post_init__(self):
        if not 0 < self.rpn_overlap_min < self.rpn_overlap_max < 1:
            raise ConfigurationError("need 0 < rpn_overlap_min < rpn_overlap_max < 1")
        if self.alternation not in ("sample", "epoch"):
            raise ConfigurationError(f"alternation must be 'sample' or 'epoch', got {self.alternation!r}")
        if self.epochs < 1 or self.epoch_length < 1:
            raise ConfigurationError("epochs and epoch_length must be positive")


class SkipBlock(Layer):
    """Three 3-tap convs in parallel with a 1x1 projection, concatenated, batch-normed, optionally pooled."""

    def __init__(self, in_ch: int, out_ch: int, pool: bool, rng, dtype=np.float32):
        super().__init__()
        half = max(1, out_ch // 2)
        rest = out_ch - half
        self.main = Sequential(
            [Conv1d(in_ch, half, 3, rng, dtype), ReLU(), Conv1d(half, half, 3, rng, dtype), ReLU(),
             Conv1d(half, half, 3, rng, dtype), ReLU()],
            ["conv1", "relu1", "conv2", "relu2", "conv3", "relu3"],
        )
        self.skip = Conv1d(in_ch, rest, 1, rng, dtype)
        self.bn = BatchNorm1d(out_ch, dtype=dtype)
        self.pool = MaxPool1d() if pool else None
        self.half = half

    def named_layers(self, prefix=""):
        yield from self.main.named_layers(prefix + "main.")
        yield prefix + "skip", self.skip
        yield prefix + "bn", self.bn

    def forward(self, x, train=False):
        y = np.concatenate([self.main.forward(x, train), self.skip.forward(x, train)], axis=1)
        y = self.bn.forward(y, train)
        return self.pool.forward(y, train) if self.pool else y

    def backward(self, dout):
        if self.pool:
            dout = self.pool.backward(dout)
        d = self.bn.backward(dout)
        return self.main.backward(np.ascontiguousarray(d[:, : self.half])) + self.skip.backward(
            np.ascontiguousarray(d[:, self.half :])
        )


def build_extractor(cfg: FeatureExtractorConfig, rng, dtype=np.float32) -> Sequential:
    """Backbone for ``cfg``; output length is ``input / stride`` with ``filters_out`` channels.

    vgg: ``log2(stride)`` pooled blocks of three 3-tap conv+ReLU, then one
    unpooled block with the same width as the last pooled block.
    vgg_skip: the same blocks with a parallel 1x1 skip path, concatenation
    and batch norm. signal: ``log2(stride)`` blocks of conv -> ReLU ->
    batch norm -> pool with a wider kernel.
    """
    filters = cfg.block_filters()
    layers, names = [], []
    in_ch = 1
    if cfg.family == "signal":
        for b, f in enumerate(filters):
            layers += [Conv1d(in_ch, f, cfg.signal_kernel, rng, dtype), ReLU(), BatchNorm1d(f, dtype=dtype), MaxPool1d()]
            names += [f"block{b}.conv", f"block{b}.relu", f"block{b}.bn", f"block{b}.pool"]
            in_ch = f
        return Sequential(layers, names)
    widths = filters + [filters[-1]]
    for b, f in enumerate(widths):
        pool = b < len(filters)
        if cfg.family == "vgg_skip":
            layers.append(SkipBlock(in_ch, f, pool, rng, dtype))
            names.append(f"block{b}")
        else:
            for c in range(3):
                layers += [Conv1d(in_ch if c == 0 else f, f, 3, rng, dtype), ReLU()]
                names += [f"block{b}.conv{c}", f"block{b}.relu{c}"]
            if pool:
                layers.append(MaxPool1d())
                names.append(f"block{b}.pool")
        in_ch = f
    return Sequential(layers, names)


def standardize(spectrum) -> np.ndarray:
    """Per-frame zero-mean, unit-variance input of shape ``(1, 1, L)``."""
    s = np.asarray(spectrum, dtype=np.float64).ravel()
    sd = s.std()
    return ((s - s.mean()) / (sd if sd > 0 else 1.0)).astype(np.float32)[None, None, :]


class FRCNN1D:
    def __init__(self, config: ModelConfig | None = None, seed: int = 0, dtype=np.float32):
        self.config = config or ModelConfig()
        cfg = self.config
        rng = np.random.default_rng(seed)
        self.extractor = build_extractor(cfg.extractor, rng, dtype)
        c_feat = cfg.extractor.filters_out
        k = len(cfg.anchor_scales)
        self.rpn_conv = Conv1d(c_feat, cfg.rpn_depth, 3, rng, dtype)
        self.rpn_relu = ReLU()
        self.rpn_cls = Conv1d(cfg.rpn_depth, k, 1, rng, dtype, init_std=0.01)
        self.rpn_reg = Conv1d(cfg.rpn_depth, 2 * k, 1, rng, dtype, init_std=0.01)
        self.roi_pool = RoiPool1d(cfg.extractor.stride, cfg.roi_len)
        self.fc1 = Linear(c_feat * cfg.roi_len, cfg.fc_width, rng, dtype)
        self.fc1_relu = ReLU()
        self.fc2 = Linear(cfg.fc_width, cfg.fc_width, rng, dtype)
        self.fc2_relu = ReLU()
        self.cls_out = Linear(cfg.fc_width, cfg.num_classes + 1, rng, dtype, init_std=0.01)
        self.reg_out = Linear(cfg.fc_width, 2 * cfg.num_classes, rng, dtype, init_std=0.001)
        self.grid: AnchorGrid = geo.generate_anchors(cfg.input_size, cfg.extractor.stride, cfg.anchor_scales)

        backbone = list(self.extractor.named_layers("backbone."))
        rpn = [("rpn.conv", self.rpn_conv), ("rpn.cls", self.rpn_cls), ("rpn.reg", self.rpn_reg)]
        head = [("head.fc1", self.fc1), ("head.fc2", self.fc2), ("head.cls", self.cls_out), ("head.reg", self.reg_out)]
        self.table = ParameterTable(backbone + rpn + head)
        self.backbone_names = ParameterTable(backbone).names()
        self.rpn_names = ParameterTable(rpn).names()
        self.head_names = ParameterTable(head).names()

    @property
    def background(self) -> int:
        return self.config.num_classes

    # forward/backward pieces
    def extract_features(self, spectrum, train: bool = False) -> np.ndarray:
        x = standardize(spectrum)
        if x.shape[2] != self.config.input_size:
            raise InputError(f"expected {self.config.input_size} bins, got {x.shape[2]}")
        return self.extractor.forward(x, train)

    def rpn_forward(self, features, train: bool = False):
        """Objectness logits ``(n, k)`` and regressions ``(n, k, 2)``."""
        h = self.rpn_relu.forward(self.rpn_conv.forward(features, train))
        logits = self.rpn_cls.forward(h, train)[0].T
        regs = self.rpn_reg.forward(h, train)[0].T.reshape(logits.shape[0], -1, 2)
        return logits, regs

    def rpn_backward(self, dlogits, dregs):
        dh = self.rpn_cls.backward(dlogits.T[None].astype(np.float32))
        dh = dh + self.rpn_reg.backward(dregs.reshape(dregs.shape[0], -1).T[None].astype(np.float32))
        return self.rpn_conv.backward(self.rpn_relu.backward(dh))

    def classifier_forward(self, features, rois, train: bool = False):
        pooled = self.roi_pool.forward(features, rois, train)
        flat = pooled.reshape(pooled.shape[0], -1)
        h = self.fc2_relu.forward(self.fc2.forward(self.fc1_relu.forward(self.fc1.forward(flat))))
        return self.cls_out.forward(h), self.reg_out.forward(h)

    def classifier_backward(self, dlogits, dregs, pooled_shape):
        dh = self.cls_out.backward(dlogits.astype(np.float32)) + self.reg_out.backward(dregs.astype(np.float32))
        dflat = self.fc1.backward(self.fc1_relu.backward(self.fc2.backward(self.fc2_relu.backward(dh))))
        return self.roi_pool.backward(dflat.reshape(pooled_shape))

    # inference
    def propose(self, logits, regs, top_n: int, nms_overlap: float = 0.7, min_len: float = 2.0):
        """Decoded, clipped, NMS-filtered proposals ``(intervals, scores)``, best first."""
        return propose_arrays(sigmoid(np.asarray(logits, dtype=np.float64)), regs, self.grid, top_n, nms_overlap, min_len)

    def classify(self, features, proposals: np.ndarray):
        """Per proposal: best foreground class, its probability, refined interval."""
        if proposals.shape[0] == 0:
            return np.zeros((0, 2)), np.zeros(0), np.zeros(0, dtype=np.int64)
        logits, regs = self.classifier_forward(features, proposals)
        probs = softmax(np.asarray(logits, dtype=np.float64))
        fg = probs[:, : self.config.num_classes]
        cls = np.argmax(fg, axis=1)
        score = fg[np.arange(fg.shape[0]), cls]
        deltas = np.asarray(regs, dtype=np.float64).reshape(-1, self.config.num_classes, 2)[np.arange(cls.size), cls]
        boxes = geo.decode_regression(proposals, deltas * CLS_REG_STD, self.config.input_size)
        return boxes, score, cls

    def detect(self, spectrum, p_min: float = 0.9, top_n: int = 64, nms_overlap: float = 0.5) -> list:
        boxes, scores, classes = self.detect_arrays(spectrum, p_min, top_n, nms_overlap)
        return [Detection(Interval(float(a), float(b)), int(c), float(s)) for (a, b), s, c in zip(boxes, scores, classes)]

    def detect_arrays(self, spectrum, p_min: float = 0.9, top_n: int = 64, nms_overlap: float = 0.5):
        feats = self.extract_features(spectrum)
        logits, regs = self.rpn_forward(feats)
        props, _ = self.propose(logits, regs, top_n)
        boxes, scores, classes = self.classify(feats, props)
        ok = (boxes[:, 1] - boxes[:, 0]) >= 1.0
        boxes, scores, classes = boxes[ok], np.clip(scores[ok], 0.0, 1.0), classes[ok]
        keep = geo.nms_arrays(boxes, scores, classes, nms_overlap)
        boxes, scores, classes = boxes[keep], scores[keep], classes[keep]
        sel = scores >= p_min
        return boxes[sel], scores[sel], classes[sel]

    # persistence
    def save(self, path, extra_meta: dict | None = None):
        meta = {"kind": "frcnn1d", "config": asdict(self.config)}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, self.table.state_dict(), meta)

    @classmethod
    def load(cls, path) -> "FRCNN1D":
        tensors, meta = load_checkpoint(path)
        if meta.get("kind") != "frcnn1d":
            raise InputError(f"{path}: not an FRCNN checkpoint")
        model = cls(ModelConfig(**meta["config"]))
        model.table.load_state_dict(tensors)
        return model


def propose_arrays(scores, regs, grid: AnchorGrid, top_n: int, nms_overlap: float = 0.7, min_len: float = 2.0):
    s = np.asarray(scores, dtype=np.float64).reshape(-1)
    d = np.asarray(regs, dtype=np.float64).reshape(-1, 2)
    if s.size != len(grid) or d.shape[0] != len(grid):
        raise ConfigurationError(f"expected {len(grid)} anchor outputs, got {s.size} scores / {d.shape[0]} regressions")
    boxes = geo.decode_regression(grid.anchors, d, grid.input_size)
    ok = (boxes[:, 1] - boxes[:, 0]) >= min_len
    boxes, s = boxes[ok], s[ok]
    keep = geo.nms_arrays(boxes, s, None, nms_overlap)[:top_n]
    return boxes[keep], s[keep]


def propose_regions(scores, regs, grid: AnchorGrid, top_n: int = 64, nms_overlap: float = 0.7) -> list:
    boxes, s = propose_arrays(scores, regs, grid, top_n, nms_overlap)
    return [Detection(Interval(float(a), float(b)), 0, float(np.clip(p, 0, 1))) for (a, b), p in zip(boxes, s)]


def extract_features(spectrum, model: FRCNN1D) -> np.ndarray:
    """Feature map ``(length, channels)`` for one spectrum."""
    return model.extract_features(spectrum)[0].T


def classify_regions(features, proposals, model: FRCNN1D) -> list:
    """Classify proposal intervals over a ``(1, C, n)`` feature map; background dropped."""
    props = geo.as_interval_array([p.interval if isinstance(p, Detection) else p for p in proposals])
    if props.shape[0] == 0:
        raise InputError("no proposals to classify")
    boxes, score, cls = model.classify(features, props)
    return [Detection(Interval(float(a), float(b)), int(c), float(s)) for (a, b), s, c in zip(boxes, score, cls)]


def detect(spectrum, model: FRCNN1D, p_min: float = 0.9) -> list:
    return model.detect(spectrum, p_min)


# training


@dataclass
class EpochLoss:
    epoch: int
    rpn_cls_loss: float
    rpn_reg_loss: float
    cls_loss: float
    reg_loss: float


def sample_anchors(labels: np.ndarray, batch: int, rng: np.random.Generator) -> np.ndarray:
    """Up to ``batch`` labeled anchors, at most half of them positive."""
    pos = np.flatnonzero(labels == geo.POSITIVE)
    neg = np.flatnonzero(labels == geo.NEGATIVE)
    n_pos = min(pos.size, batch // 2)
    pos = rng.choice(pos, n_pos, replace=False) if pos.size > n_pos else pos
    n_neg = min(neg.size, batch - pos.size)
    neg = rng.choice(neg, n_neg, replace=False) if neg.size > n_neg else neg
    return np.sort(np.concatenate([pos, neg]))


def sample_rois(proposals: np.ndarray, truths: np.ndarray, truth_cls: np.ndarray, cfg: TrainConfig,
                rng: np.random.Generator, background: int):
    """Classifier training ROIs with class targets and (normalized) regression targets."""
    rois = proposals
    if cfg.include_truth_rois and truths.shape[0]:
        rois = np.concatenate([truths.astype(np.float64), proposals], axis=0)
    if rois.shape[0] == 0:
        return rois, np.zeros(0, dtype=np.int64), np.zeros((0, 2))
    if truths.shape[0]:
        ious = geo.iou_matrix(rois, truths)
        best = np.argmax(ious, axis=1)
        best_iou = ious[np.arange(rois.shape[0]), best]
    else:
        best = np.zeros(rois.shape[0], dtype=np.int64)
        best_iou = np.zeros(rois.shape[0])
    fg = np.flatnonzero(best_iou >= cfg.classifier_iou)
    bg = np.flatnonzero(best_iou < cfg.classifier_iou)
    n_fg = min(fg.size, int(round(cfg.roi_batch * cfg.roi_fg_fraction)))
    fg = rng.choice(fg, n_fg, replace=False) if fg.size > n_fg else fg
    n_bg = min(bg.size, cfg.roi_batch - fg.size)
    bg = rng.choice(bg, n_bg, replace=False) if bg.size > n_bg else bg
    sel = np.concatenate([fg, bg]).astype(np.int64)
    labels = np.full(sel.size, background, dtype=np.int64)
    labels[: fg.size] = truth_cls[best[fg]]
    targets = np.zeros((sel.size, 2))
    if fg.size:
        targets[: fg.size] = geo.encode_regression(rois[fg], truths[best[fg]]) / CLS_REG_STD
    return rois[sel], labels, targets


def _finite(*vals):
    return all(np.isfinite(v) for v in vals)


def rpn_step(model: FRCNN1D, spectrum, truths, cfg: TrainConfig, opt: AdamState, rng) -> tuple:
    feats = model.extract_features(spectrum, train=True)
    logits, regs = model.rpn_forward(feats, train=True)
    tgt = geo.assign_rpn_targets(model.grid, truths, cfg.rpn_overlap_min, cfg.rpn_overlap_max)
    sel = sample_anchors(tgt.labels, cfg.rpn_batch, rng)
    flat_logits = np.asarray(logits, dtype=np.float64).reshape(-1)
    flat_regs = np.asarray(regs, dtype=np.float64).reshape(-1, 2)
    cls_loss, g_sel = sigmoid_binary_crossentropy(flat_logits[sel], (tgt.labels[sel] == geo.POSITIVE).astype(float))
    dlogits = np.zeros_like(flat_logits)
    dlogits[sel] = g_sel
    pos = sel[tgt.labels[sel] == geo.POSITIVE]
    dregs = np.zeros_like(flat_regs)
    reg_loss = 0.0
    if pos.size:
        reg_loss, g = smooth_l1(flat_regs[pos], tgt.regressions[pos])
        reg_loss /= pos.size
        dregs[pos] = g / pos.size
    if not _finite(cls_loss, reg_loss):
        raise DivergenceError(f"RPN loss is not finite (cls={cls_loss}, reg={reg_loss})")
    dfeat = model.rpn_backward(dlogits.reshape(logits.shape), dregs.reshape(regs.shape))
    model.extractor.backward(dfeat)
    grads = model.table.grads()
    names = model.backbone_names + model.rpn_names
    adam_step(model.table.params(), grads, opt, names)
    return cls_loss, reg_loss


def classifier_step(model: FRCNN1D, spectrum, truths, truth_cls, cfg: TrainConfig, opt: AdamState, rng) -> tuple:
    feats = model.extract_features(spectrum, train=True)
    logits, regs = model.rpn_forward(feats)
    props, _ = model.propose(logits, regs, cfg.train_proposals, cfg.proposal_nms)
    rois, labels, targets = sample_rois(props, truths, truth_cls, cfg, rng, model.background)
    if rois.shape[0] == 0:
        return 0.0, 0.0
    c_logits, c_regs = model.classifier_forward(feats, rois, train=True)
    n_cls = model.config.num_classes
    onehot = np.zeros((rois.shape[0], n_cls + 1))
    onehot[np.arange(rois.shape[0]), labels] = 1.0
    cls_loss, dlogits = softmax_crossentropy(c_logits, onehot)
    dregs = np.zeros((rois.shape[0], n_cls, 2))
    fg = np.flatnonzero(labels != model.background)
    reg_loss = 0.0
    if fg.size:
        pred = np.asarray(c_regs, dtype=np.float64).reshape(-1, n_cls, 2)[fg, labels[fg]]
        reg_loss, g = smooth_l1(pred, targets[fg])
        reg_loss /= fg.size
        dregs[fg, labels[fg]] = g / fg.size
    if not _finite(cls_loss, reg_loss):
        raise DivergenceError(f"classifier loss is not finite (cls={cls_loss}, reg={reg_loss})")
    pooled_shape = (rois.shape[0], model.config.extractor.filters_out, model.config.roi_len)
    dfeat = model.classifier_backward(dlogits, dregs.reshape(rois.shape[0], -1), pooled_shape)
    model.extractor.backward(dfeat.astype(np.float32))
    names = model.backbone_names + model.head_names
    adam_step(model.table.params(), model.table.grads(), opt, names)
    return cls_loss, reg_loss


def class_index(labels, class_names) -> np.ndarray:
    """Map truth labels to class ids; single-class models map everything to 0."""
    if len(class_names) == 1:
        return np.zeros(len(labels), dtype=np.int64)
    lookup = {n: i for i, n in enumerate(class_names)}
    return np.asarray([lookup[l] for l in labels], dtype=np.int64)


def train_alternating(records, cfg: TrainConfig | None = None, model: FRCNN1D | None = None,
                      model_config: ModelConfig | None = None, progress=None) -> tuple:
    """Two-step alternating training. Returns ``(model, [EpochLoss, ...])``.

    Each epoch visits ``epoch_length`` frames drawn from a per-epoch shuffle of
    ``records`` (cycled if shorter).
    """
    cfg = cfg or TrainConfig()
    records = list(records)
    if not records:
        raise InputError("training set is empty")
    model = model or FRCNN1D(model_config, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    opt = AdamState(lr=cfg.lr)
    history = []
    for epoch in range(cfg.epochs):
        order = np.concatenate([rng.permutation(len(records)) for _ in range(-(-cfg.epoch_length // len(records)))])
        order = order[: cfg.epoch_length]
        sums = np.zeros(4)
        counts = np.zeros(2)
        do_rpn = cfg.alternation == "sample" or epoch % 2 == 0
        do_cls = cfg.alternation == "sample" or epoch % 2 == 1
        for step, i in enumerate(order):
            r = records[i]
            truths = np.asarray(r.truths, dtype=np.float64).reshape(-1, 2)
            tcls = class_index(r.labels, model.config.class_names)
            if do_rpn:
                sums[0:2] += rpn_step(model, r.spectrum, truths, cfg, opt, rng)
                counts[0] += 1
            if do_cls:
                sums[2:4] += classifier_step(model, r.spectrum, truths, tcls, cfg, opt, rng)
                counts[1] += 1
            if progress is not None:
                progress(epoch, step)
        c0, c1 = max(counts[0], 1), max(counts[1], 1)
        el = EpochLoss(epoch, sums[0] / c0, sums[1] / c0, sums[2] / c1, sums[3] / c1)
        history.append(el)
        log.info("epoch %d rpn_cls %.4f rpn_reg %.4f cls %.4f reg %.4f", epoch, *list(asdict(el).values())[1:])
    return model, history


def write_loss_csv(history, path, provenance: str = "") -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            fh.write(f"# {provenance}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "rpn_cls_loss", "rpn_reg_loss", "cls_loss", "reg_loss"])
        for h in history:
            w.writerow([h.epoch] + [repr(float(getattr(h, k))) for k in ("rpn_cls_loss", "rpn_reg_loss", "cls_loss", "reg_loss")])
