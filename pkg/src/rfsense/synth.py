"""Randomized multi-transmitter scenes, ground truth, and the dataset container.

A dataset is a pair of files sharing a prefix:

``<prefix>.idx``
    UTF-8 text. Line 1 is a JSON header; every further line is one JSON
    record ``{"i", "seed", "snr_db", "offset", "truths", "labels"}`` where
    ``offset`` is the byte offset of the record in the payload file.
``<prefix>.f32``
    Raw little-endian float32. Each record is ``fft_size`` dB bins, followed
    (when the header has ``with_baseband``) by ``fft_size`` interleaved I/Q
    sample pairs.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import dsp
from .dsp import BasebandFrame, Modulation, RicianConfig
from .errors import ConfigurationError, InputError

log = logging.getLogger(__name__)

SAMPLE_RATE_HZ = 200_000.0
MAX_TRANSMISSIONS = 5
FORMAT_NAME = "rfsense-dataset"
FORMAT_VERSION = 1
_F32 = np.dtype("<f4")


@dataclass(frozen=True)
class TransmissionSpec:
    center_freq_hz: float
    bandwidth_hz: float
    scheme: Modulation

    @property
    def low_hz(self) -> float:
        return self.center_freq_hz - self.bandwidth_hz / 2

    @property
    def high_hz(self) -> float:
        return self.center_freq_hz + self.bandwidth_hz / 2


@dataclass
class Scenario:
    transmissions: list
    snr_db: float
    seed: int
    sample_rate_hz: float = SAMPLE_RATE_HZ


@dataclass
class DatasetRecord:
    spectrum: np.ndarray  # float32 (fft_size,)
    truths: np.ndarray  # int64 (n, 2) half-open bin intervals
    labels: list  # modulation name per truth
    seed: int = 0
    snr_db: float = 0.0
    baseband: np.ndarray | None = field(default=None)  # complex64 (fft_size,)

    def __eq__(self, other):
        if not isinstance(other, DatasetRecord):
            return NotImplemented
        same_bb = (self.baseband is None and other.baseband is None) or (
            self.baseband is not None
            and other.baseband is not None
            and np.array_equal(self.baseband, other.baseband)
        )
        return (
            np.array_equal(self.spectrum, other.spectrum)
            and self.spectrum.dtype == other.spectrum.dtype
            and np.array_equal(self.truths, other.truths)
            and list(self.labels) == list(other.labels)
            and self.seed == other.seed
            and self.snr_db == other.snr_db
            and same_bb
        )


def intervals_overlap(a: TransmissionSpec, b: TransmissionSpec) -> bool:
    return min(a.high_hz, b.high_hz) > max(a.low_hz, b.low_hz)


def remove_overlaps(transmissions: list, rng: np.random.Generator) -> list:
    """Repeatedly drop one member (chosen uniformly) of the first overlapping pair."""
    kept = list(transmissions)
    while True:
        pair = next(
            ((i, j) for i in range(len(kept)) for j in range(i + 1, len(kept)) if intervals_overlap(kept[i], kept[j])),
            None,
        )
        if pair is None:
            return kept
        kept.pop(pair[int(rng.integers(2))])


def random_scenario(
    rng: np.random.Generator,
    snr_db: float,
    band_hz: float = SAMPLE_RATE_HZ,
    n_candidates: int = MAX_TRANSMISSIONS,
    bandwidth_range: tuple | None = None,
) -> Scenario:
    """Draw ``n_candidates`` transmissions, then resolve frequency overlaps."""
    if not band_hz > 0:
        raise ConfigurationError(f"band must be positive, got {band_hz}")
    lo_bw, hi_bw = bandwidth_range or (band_hz / 64, band_hz / 8)
    schemes = list(Modulation)
    cands = []
    for _ in range(n_candidates):
        bw = rng.uniform(lo_bw, hi_bw)
        fc = rng.uniform(-band_hz / 2 + bw / 2, band_hz / 2 - bw / 2)
        cands.append(TransmissionSpec(float(fc), float(bw), schemes[int(rng.integers(len(schemes)))]))
    kept = remove_overlaps(cands, rng)
    seed = int(rng.integers(0, 2**63 - 1))
    return Scenario(kept, float(snr_db), seed, float(band_hz))


def truth_interval(t: TransmissionSpec, sample_rate_hz: float, fft_size: int = dsp.DEFAULT_FFT_SIZE):
    """Bin interval ``[512 + round(N f_lo / fs), 512 + round(N f_hi / fs))`` for N = 1024."""
    half = fft_size // 2
    lo = half + int(round(fft_size * t.low_hz / sample_rate_hz))
    hi = half + int(round(fft_size * t.high_hz / sample_rate_hz))
    return max(lo, 0), min(hi, fft_size)


def synthesize_transmission(
    t: TransmissionSpec,
    n_samples: int,
    sample_rate_hz: float,
    rng: np.random.Generator,
    rolloff: float = 0.35,
    sps: int = 8,
    span_symbols: int = 10,
) -> np.ndarray:
    """modulate -> raised cosine -> resample to the target bandwidth -> shift to ``fc``.

    The occupied bandwidth ``symbol_rate * (1 + rolloff)`` equals ``t.bandwidth_hz``.
    Output has unit mean power.
    """
    symbol_rate = t.bandwidth_hz / (1.0 + rolloff)
    ratio = Fraction(sample_rate_hz / (symbol_rate * sps)).limit_denominator(64)
    if ratio <= 0:
        raise ConfigurationError(f"bandwidth {t.bandwidth_hz} Hz not realizable at fs={sample_rate_hz}")
    per_symbol = sps * float(ratio)
    transient = int(math.ceil(span_symbols * per_symbol))
    n_sym = int(math.ceil((n_samples + 2 * transient) / per_symbol)) + 1
    bits = rng.integers(0, 2, size=n_sym * t.scheme.bits_per_symbol)
    shaped = dsp.pulse_shape(dsp.modulate(bits, t.scheme), rolloff, span_symbols, sps)
    wide = dsp.resample(shaped, ratio)
    seg = wide[transient : transient + n_samples]
    if seg.size < n_samples:
        raise InputError("internal: synthesized segment too short")
    frame = dsp.normalize_power(BasebandFrame(seg, sample_rate_hz))
    return dsp.frequency_shift(frame, -t.center_freq_hz).samples


def render_baseband(
    s: Scenario,
    fft_size: int = dsp.DEFAULT_FFT_SIZE,
    rician: RicianConfig | None = None,
) -> BasebandFrame:
    rng = np.random.default_rng(s.seed)
    mix = np.zeros(fft_size, dtype=np.complex128)
    for t in s.transmissions:
        mix += synthesize_transmission(t, fft_size, s.sample_rate_hz, rng)
    frame = BasebandFrame(mix, s.sample_rate_hz)
    if s.transmissions:
        frame = dsp.normalize_power(frame)
        frame = dsp.rician_channel(frame, rician or RicianConfig(), rng)
    return dsp.awgn(frame, s.snr_db, rng)


def render_scenario(
    s: Scenario,
    fft_size: int = dsp.DEFAULT_FFT_SIZE,
    rician: RicianConfig | None = None,
    keep_baseband: bool = False,
) -> DatasetRecord:
    """Synthesize, mix, impair and transform a scenario into a labeled record."""
    frame = render_baseband(s, fft_size, rician)
    spectrum = dsp.fft_db(frame, fft_size).bins.astype(_F32)
    order = sorted(s.transmissions, key=lambda t: t.center_freq_hz)
    truths = np.asarray([truth_interval(t, s.sample_rate_hz, fft_size) for t in order], dtype=np.int64).reshape(-1, 2)
    labels = [t.scheme.value for t in order]
    baseband = frame.samples[:fft_size].astype(np.complex64) if keep_baseband else None
    return DatasetRecord(spectrum, truths, labels, seed=s.seed, snr_db=s.snr_db, baseband=baseband)


def make_record(seed: int, snr_db: float, band_hz: float = SAMPLE_RATE_HZ, keep_baseband: bool = False,
                fft_size: int = dsp.DEFAULT_FFT_SIZE, n_candidates: int = MAX_TRANSMISSIONS) -> DatasetRecord:
    """Build one record from its replay key ``(seed, snr_db)``."""
    rng = np.random.default_rng(seed)
    scen = random_scenario(rng, snr_db, band_hz, n_candidates=n_candidates)
    rec = render_scenario(scen, fft_size, keep_baseband=keep_baseband)
    rec.seed = int(seed)
    return rec


def _make_record_args(args):
    return make_record(*args)


def draw_snrs(n: int, snr_spec, rng: np.random.Generator) -> np.ndarray:
    """A fixed dB value or a ``(lo, hi)`` range (or ``"lo:hi"``) drawn uniformly per record."""
    if isinstance(snr_spec, str):
        parts = snr_spec.split(":")
        if len(parts) > 2:
            raise ConfigurationError(f"bad SNR spec {snr_spec!r}; use a value or lo:hi")
        snr_spec = tuple(parts) if len(parts) == 2 else parts[0]
    if isinstance(snr_spec, (tuple, list)):
        lo, hi = float(snr_spec[0]), float(snr_spec[1])
        if hi < lo:
            raise ConfigurationError(f"SNR range reversed: {lo}:{hi}")
        return rng.uniform(lo, hi, size=n)
    return np.full(n, float(snr_spec))


def generate_records(n: int, snr_spec, seed: int, with_baseband: bool = False, jobs: int = 1,
                     n_candidates: int = MAX_TRANSMISSIONS, band_hz: float = SAMPLE_RATE_HZ) -> list:
    if n <= 0:
        raise ConfigurationError(f"dataset size must be positive, got {n}")
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**63 - 1, size=n)
    snrs = draw_snrs(n, snr_spec, rng)
    args = [(int(sd), float(sn), band_hz, with_baseband, dsp.DEFAULT_FFT_SIZE, n_candidates) for sd, sn in zip(seeds, snrs)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(_make_record_args, args, chunksize=16))
    return [make_record(*a) for a in args]


def generate_dataset(n: int, snr_spec, seed: int, out_path, with_baseband: bool = False, jobs: int = 1,
                     n_candidates: int = MAX_TRANSMISSIONS) -> tuple:
    """Generate ``n`` records and write the ``.idx``/``.f32`` pair. Returns both paths."""
    records = generate_records(n, snr_spec, seed, with_baseband, jobs, n_candidates)
    return save_dataset(records, out_path)


def dataset_paths(prefix) -> tuple:
    prefix = str(prefix)
    for ext in (".idx", ".f32"):
        if prefix.endswith(ext):
            prefix = prefix[: -len(ext)]
    return Path(prefix + ".idx"), Path(prefix + ".f32")


def save_dataset(records: list, prefix, sample_rate_hz: float = SAMPLE_RATE_HZ) -> tuple:
    idx_path, bin_path = dataset_paths(prefix)
    if not records:
        raise InputError("refusing to write an empty dataset")
    fft_size = int(records[0].spectrum.size)
    with_bb = records[0].baseband is not None
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "fft_size": fft_size,
        "sample_rate_hz": sample_rate_hz,
        "with_baseband": with_bb,
        "count": len(records),
    }
    try:
        idx_path.parent.mkdir(parents=True, exist_ok=True)
        offset = 0
        with open(idx_path, "w", encoding="utf-8", newline="\n") as fi, open(bin_path, "wb") as fb:
            fi.write(json.dumps(header, sort_keys=True) + "\n")
            for i, r in enumerate(records):
                if r.spectrum.size != fft_size or (r.baseband is not None) != with_bb:
                    raise InputError(f"record {i} does not match dataset layout")
                blob = np.asarray(r.spectrum, dtype=_F32).tobytes()
                if with_bb:
                    iq = np.empty(2 * fft_size, dtype=_F32)
                    iq[0::2] = r.baseband.real
                    iq[1::2] = r.baseband.imag
                    blob += iq.tobytes()
                entry = {
                    "i": i,
                    "seed": int(r.seed),
                    "snr_db": float(r.snr_db),
                    "offset": offset,
                    "truths": [[int(a), int(b)] for a, b in np.asarray(r.truths).reshape(-1, 2)],
                    "labels": list(r.labels),
                }
                fi.write(json.dumps(entry, sort_keys=True) + "\n")
                fb.write(blob)
                offset += len(blob)
    except OSError as exc:
        raise OSError(f"failed writing dataset {idx_path} / {bin_path}: {exc}") from exc
    return idx_path, bin_path


def load_dataset(prefix) -> tuple:
    """Read a dataset pair. Returns ``(records, header)``."""
    idx_path, bin_path = dataset_paths(prefix)
    try:
        with open(idx_path, encoding="utf-8") as fi:
            header = json.loads(fi.readline())
            entries = [json.loads(line) for line in fi if line.strip()]
        payload = np.fromfile(bin_path, dtype=_F32)
    except OSError as exc:
        raise OSError(f"failed reading dataset {idx_path} / {bin_path}: {exc}") from exc
    if header.get("format") != FORMAT_NAME:
        raise InputError(f"{idx_path}: not an {FORMAT_NAME} index")
    if header.get("version") != FORMAT_VERSION:
        raise InputError(f"{idx_path}: unsupported version {header.get('version')}")
    n_fft = int(header["fft_size"])
    with_bb = bool(header["with_baseband"])
    stride = n_fft * (3 if with_bb else 1)
    if payload.size != stride * len(entries):
        raise InputError(f"{bin_path}: payload size {payload.size} does not match {len(entries)} records")
    records = []
    for e in entries:
        start = e["offset"] // 4
        spec = payload[start : start + n_fft].copy()
        bb = None
        if with_bb:
            iq = payload[start + n_fft : start + 3 * n_fft]
            bb = (iq[0::2] + 1j * iq[1::2]).astype(np.complex64)
        truths = np.asarray(e["truths"], dtype=np.int64).reshape(-1, 2)
        records.append(DatasetRecord(spec, truths, list(e["labels"]), int(e["seed"]), float(e["snr_db"]), bb))
    return records, header


def generate_snr_sets(snrs, n: int, seed: int, out_dir, with_baseband: bool = False, jobs: int = 1) -> list:
    """One fixed-SNR test set per value, named ``test_snr{value}``."""
    out = []
    os.makedirs(out_dir, exist_ok=True)
    for k, snr in enumerate(snrs):
        prefix = Path(out_dir) / f"test_snr{snr:g}"
        out.append(generate_dataset(n, float(snr), seed + k, prefix, with_baseband, jobs))
    return out


def acquisition_cost(sample_rate_hz: float, fft_size: int, spectrogram: bool = False) -> tuple:
    """Samples and seconds needed to fill one detector input.

    A 1D frame needs ``fft_size`` samples; a square spectrogram ``fft_size**2``.
    """
    if sample_rate_hz <= 0 or fft_size <= 0:
        raise ConfigurationError("sample rate and FFT size must be positive")
    samples = int(fft_size) ** 2 if spectrogram else int(fft_size)
    return samples, samples / sample_rate_hz
