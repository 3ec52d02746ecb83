"""Modulation classification of detected transmissions.

Each detection is isolated from the wideband mixture by shifting its center
to DC and lowpass filtering to its width; the resulting I/Q clip goes to a
small CNN over {BPSK, QPSK, PAM4, QAM16, NoSignal}. Detections classified as
NoSignal are dropped.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np

from . import dsp
from .errors import ConfigurationError, DegenerateInputError, DivergenceError, InputError
from .geometry import Detection, Interval
from .nn import (
    AdamState,
    BatchNorm1d,
    Conv1d,
    Linear,
    MaxPool1d,
    ParameterTable,
    ReLU,
    Sequential,
    adam_step,
    load_checkpoint,
    save_checkpoint,
    softmax,
    softmax_crossentropy,
)

log = logging.getLogger(__name__)


class AMCClass(enum.IntEnum):
    BPSK = 0
    QPSK = 1
    PAM4 = 2
    QAM16 = 3
    NoSignal = 4

    @classmethod
    def from_label(cls, label: str) -> "AMCClass":
        try:
            return cls[label]
        except KeyError:
            raise InputError(f"unknown modulation label {label!r}") from None


N_CLASSES = len(AMCClass)
CLIP_LEN = dsp.DEFAULT_FFT_SIZE


def detection_band(interval, sample_rate_hz: float, fft_size: int = dsp.DEFAULT_FFT_SIZE) -> tuple:
    """Center frequency and width in Hz of a bin interval."""
    iv = interval.interval if isinstance(interval, Detection) else interval
    lo, hi = (iv.start, iv.end) if isinstance(iv, Interval) else iv
    if not hi > lo:
        raise DegenerateInputError(f"degenerate interval [{lo}, {hi})")
    center = float(dsp.bin_to_hz(0.5 * (lo + hi), sample_rate_hz, fft_size))
    return center, (hi - lo) * sample_rate_hz / fft_size


def isolate_band(frame: dsp.BasebandFrame, center_hz: float, bandwidth_hz: float,
                 num_taps: int = dsp.DEFAULT_NUM_TAPS) -> dsp.BasebandFrame:
    if bandwidth_hz <= 0:
        raise DegenerateInputError(f"bandwidth must be positive, got {bandwidth_hz}")
    fs = frame.sample_rate_hz
    # fold into the representable band
    center_hz = (center_hz + fs / 2) % fs - fs / 2
    shifted = dsp.frequency_shift(frame, center_hz)
    if bandwidth_hz >= fs:
        return shifted
    return dsp.apply_fir(shifted, dsp.design_lowpass(bandwidth_hz, fs, num_taps))


def isolate_signal(frame: dsp.BasebandFrame, det, fft_size: int = dsp.DEFAULT_FFT_SIZE,
                   num_taps: int = dsp.DEFAULT_NUM_TAPS) -> dsp.BasebandFrame:
    """Move a detected band to DC and lowpass it to its width. Output length equals input length."""
    center, bw = detection_band(det, frame.sample_rate_hz, fft_size)
    return isolate_band(frame, center, bw, num_taps)


def clip_tensor(frame, length: int = CLIP_LEN) -> np.ndarray:
    """Unit-power 2-channel (I, Q) float32 tensor of shape ``(2, length)``."""
    x = np.asarray(frame.samples if isinstance(frame, dsp.BasebandFrame) else frame, dtype=np.complex128)
    if x.size < length:
        raise InputError(f"clip needs {length} samples, got {x.size}")
    x = x[:length]
    p = np.mean(np.abs(x) ** 2)
    if p > 0:
        x = x / np.sqrt(p)
    return np.stack([x.real, x.imag]).astype(np.float32)


# dataset


@dataclass
class AMCDataset:
    clips: np.ndarray  # (n, 2, CLIP_LEN) float32
    labels: np.ndarray  # (n,) int64 AMCClass values

    def __len__(self):
        return int(self.labels.size)

    def class_fractions(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=N_CLASSES) / max(1, len(self))

    def split(self, fractions, rng: np.random.Generator) -> list:
        order = rng.permutation(len(self))
        cuts = np.cumsum(np.round(np.asarray(fractions) * len(self)).astype(int))[:-1]
        return [AMCDataset(self.clips[i], self.labels[i]) for i in np.split(order, cuts)]


def _empty_window(truths: np.ndarray, width: int, fft_size: int, rng, margin: int = 4):
    """Random ``[lo, lo + width)`` inside a gap between truths, or None."""
    edges = [0] + [v for ab in sorted(map(tuple, truths)) for v in ab] + [fft_size]
    gaps = []
    for lo, hi in zip(edges[0::2], edges[1::2]):
        lo2, hi2 = (lo + margin if lo > 0 else lo), (hi - margin if hi < fft_size else hi)
        if hi2 - lo2 >= width:
            gaps.append((lo2, hi2))
    if not gaps:
        return None
    lo, hi = gaps[rng.integers(len(gaps))]
    start = int(rng.integers(lo, hi - width + 1))
    return start, start + width


def make_amc_dataset(records, rng: np.random.Generator, offset_hz: float = 2e3,
                     bandwidth_scale: tuple = (0.7, 1.5), sample_rate_hz: float = 200e3,
                     nosignal_ratio: float | None = None) -> AMCDataset:
    """One clip per truth with perturbed isolation, plus NoSignal clips from empty windows.

    NoSignal clips are added until they number ``nosignal_ratio`` times the
    signal clips (default: the mean per-scheme count, i.e. a 1/4 ratio).
    """
    ratio = 1.0 / (N_CLASSES - 1) if nosignal_ratio is None else nosignal_ratio
    clips, labels = [], []
    n_sig = n_none = 0
    widths = []
    for r in records:
        if r.baseband is None:
            raise InputError("AMC dataset needs records with baseband samples")
        frame = dsp.BasebandFrame(np.asarray(r.baseband, dtype=np.complex128), sample_rate_hz)
        fft_size = r.spectrum.size
        truths = np.asarray(r.truths).reshape(-1, 2)
        for (a, b), lab in zip(truths, r.labels):
            center, bw = detection_band((float(a), float(b)), sample_rate_hz, fft_size)
            center += rng.uniform(-offset_hz, offset_hz)
            bw *= rng.uniform(*bandwidth_scale)
            clips.append(clip_tensor(isolate_band(frame, center, bw)))
            labels.append(int(AMCClass.from_label(lab)))
            widths.append(int(b - a))
            n_sig += 1
        while widths and n_none < ratio * n_sig:
            w = int(widths[rng.integers(len(widths))])
            win = _empty_window(truths, w, fft_size, rng)
            if win is None:
                break
            center, bw = detection_band(win, sample_rate_hz, fft_size)
            clips.append(clip_tensor(isolate_band(frame, center, bw)))
            labels.append(int(AMCClass.NoSignal))
            n_none += 1
    if not clips:
        raise InputError("no clips produced")
    return AMCDataset(np.stack(clips), np.asarray(labels, dtype=np.int64))


# model


class AMCModel:
    """4 x [conv7 -> ReLU -> batchnorm -> maxpool2] with 32 filters, then a linear softmax layer."""

    def __init__(self, filters: int = 32, kernel: int = 7, n_blocks: int = 4, clip_len: int = CLIP_LEN, seed: int = 0):
        if clip_len % (2**n_blocks):
            raise ConfigurationError(f"clip length {clip_len} not divisible by 2^{n_blocks}")
        self.hparams = {"filters": filters, "kernel": kernel, "n_blocks": n_blocks, "clip_len": clip_len}
        rng = np.random.default_rng(seed)
        layers, names = [], []
        ch = 2
        for b in range(n_blocks):
            layers += [Conv1d(ch, filters, kernel, rng), ReLU(), BatchNorm1d(filters), MaxPool1d()]
            names += [f"block{b}.conv", f"block{b}.relu", f"block{b}.bn", f"block{b}.pool"]
            ch = filters
        self.body = Sequential(layers, names)
        self.fc = Linear(filters * clip_len // 2**n_blocks, N_CLASSES, rng)
        self.table = ParameterTable(list(self.body.named_layers("body.")) + [("fc", self.fc)])

    def forward(self, x, train: bool = False):
        h = self.body.forward(np.asarray(x, dtype=np.float32), train)
        self._shape = h.shape
        return self.fc.forward(h.reshape(h.shape[0], -1))

    def backward(self, dlogits):
        dh = self.fc.backward(dlogits.astype(np.float32))
        self.body.backward(dh.reshape(self._shape))

    def predict_proba(self, x, batch: int = 256) -> np.ndarray:
        x = np.asarray(x, dtype=np.float32)
        if x.ndim == 2:
            x = x[None]
        out = [softmax(np.asarray(self.forward(x[i : i + batch]), dtype=np.float64)) for i in range(0, len(x), batch)]
        return np.concatenate(out) if out else np.zeros((0, N_CLASSES))

    def predict(self, x) -> np.ndarray:
        return np.argmax(self.predict_proba(x), axis=1)

    def accuracy(self, data: AMCDataset) -> float:
        return float(np.mean(self.predict(data.clips) == data.labels)) if len(data) else float("nan")

    def save(self, path, extra_meta: dict | None = None):
        meta = {"kind": "amc", "hparams": self.hparams, "classes": [c.name for c in AMCClass]}
        if extra_meta:
            meta.update(extra_meta)
        save_checkpoint(path, self.table.state_dict(), meta)

    @classmethod
    def load(cls, path) -> "AMCModel":
        tensors, meta = load_checkpoint(path)
        if meta.get("kind") != "amc":
            raise InputError(f"{path}: not an AMC checkpoint")
        model = cls(**meta["hparams"])
        model.table.load_state_dict(tensors)
        return model


@dataclass
class AMCEpoch:
    epoch: int
    loss: float
    train_accuracy: float
    val_accuracy: float = float("nan")


@dataclass
class AMCTrainConfig:
    epochs: int = 40
    lr: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    extra: dict = field(default_factory=dict)


def train_amc(train: AMCDataset, cfg: AMCTrainConfig | None = None, val: AMCDataset | None = None,
              model: AMCModel | None = None) -> tuple:
    """Adam on categorical cross-entropy. Returns ``(model, [AMCEpoch, ...])``."""
    cfg = cfg or AMCTrainConfig()
    if len(train) == 0:
        raise InputError("AMC training set is empty")
    model = model or AMCModel(seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed + 1)
    opt = AdamState(lr=cfg.lr)
    eye = np.eye(N_CLASSES)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(train))
        total, correct = 0.0, 0
        for i in range(0, len(order), cfg.batch_size):
            idx = order[i : i + cfg.batch_size]
            if idx.size < 2:  # batchnorm needs a batch
                continue
            logits = model.forward(train.clips[idx], train=True)
            loss, grad = softmax_crossentropy(logits, eye[train.labels[idx]])
            if not np.isfinite(loss):
                raise DivergenceError(f"AMC loss is not finite at epoch {epoch}")
            model.backward(grad)
            adam_step(model.table.params(), model.table.grads(), opt)
            total += loss * idx.size
            correct += int(np.sum(np.argmax(logits, axis=1) == train.labels[idx]))
        h = AMCEpoch(epoch, total / len(train), correct / len(train), model.accuracy(val) if val is not None else float("nan"))
        history.append(h)
        log.info("amc epoch %d loss %.4f acc %.3f val %.3f", epoch, h.loss, h.train_accuracy, h.val_accuracy)
    return model, history


# combined pipeline


def classify_detections(frame: dsp.BasebandFrame, dets, amc: AMCModel, fft_size: int = dsp.DEFAULT_FFT_SIZE) -> list:
    """Relabel each detection with its AMC class; NoSignal detections are dropped."""
    dets = list(dets)
    if not dets:
        return []
    clips = np.stack([clip_tensor(isolate_signal(frame, d, fft_size)) for d in dets])
    pred = amc.predict(clips)
    return [Detection(d.interval, int(c), d.score) for d, c in zip(dets, pred) if c != AMCClass.NoSignal]


def detect_and_classify(frame: dsp.BasebandFrame, frcnn, amc: AMCModel, p_min: float = 0.9,
                        fft_size: int = dsp.DEFAULT_FFT_SIZE) -> list:
    spectrum = dsp.fft_db(frame, fft_size)
    return classify_detections(frame, frcnn.detect(spectrum.bins, p_min), amc, fft_size)
