"""Complex-baseband signal primitives.

Modulation, raised-cosine pulse shaping, rational resampling, frequency
shifting, windowed-sinc lowpass design, channel impairments and dB FFT framing.
All randomness comes from an explicit ``numpy.random.Generator``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import signal as sps

from .errors import AliasingError, ConfigurationError, DegenerateInputError, InputError

DEFAULT_FFT_SIZE = 1024
DEFAULT_NUM_TAPS = 129
DB_FLOOR = -120.0


class Modulation(str, enum.Enum):
    BPSK = "BPSK"
    QPSK = "QPSK"
    PAM4 = "PAM4"
    QAM16 = "QAM16"

    @property
    def bits_per_symbol(self) -> int:
        return _BITS_PER_SYMBOL[self]


_BITS_PER_SYMBOL = {Modulation.BPSK: 1, Modulation.QPSK: 2, Modulation.PAM4: 2, Modulation.QAM16: 4}

# Gray-coded 4-level amplitude: 00, 01, 11, 10 -> -3, -1, +1, +3
_GRAY4 = np.array([-3.0, -1.0, 3.0, 1.0])


@dataclass
class BasebandFrame:
    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.complex128)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise InputError("baseband frame must be a non-empty 1D vector")
        if not self.sample_rate_hz > 0:
            raise ConfigurationError(f"sample rate must be positive, got {self.sample_rate_hz}")

    def __len__(self):
        return self.samples.size

    def replace(self, samples) -> "BasebandFrame":
        return BasebandFrame(samples, self.sample_rate_hz)


@dataclass
class SpectrumFrame:
    """Centered dB-magnitude spectrum; DC sits at index ``fft_size // 2``."""

    bins: np.ndarray

    def __post_init__(self):
        self.bins = np.asarray(self.bins)
        if self.bins.ndim != 1 or self.bins.size == 0:
            raise InputError("spectrum must be a non-empty 1D vector")

    @property
    def fft_size(self) -> int:
        return self.bins.size

    def __len__(self):
        return self.bins.size

    def __array__(self, dtype=None, copy=None):
        return self.bins if dtype is None else self.bins.astype(dtype)


@dataclass
class FirFilter:
    taps: np.ndarray
    cutoff_hz: float

    @property
    def num_taps(self) -> int:
        return self.taps.size


@dataclass
class RicianConfig:
    """Static two-path Rician channel.

    ``k_factor=inf`` disables the scattered path; ``scatter_gain_db=-inf``
    zeroes it while keeping the line-of-sight weight.
    """

    k_factor: float = 4.0
    delay_samples: int = 2
    scatter_gain_db: float = -10.0


def _as_frame(frame) -> BasebandFrame:
    if isinstance(frame, BasebandFrame):
        return frame
    raise InputError(f"expected BasebandFrame, got {type(frame).__name__}")


def modulate(bits, scheme) -> np.ndarray:
    """Map bits to unit-average-power constellation symbols.

    BPSK: 0 -> -1, 1 -> +1. QPSK and QAM16 are Gray coded per axis; PAM4 uses
    Gray-coded levels {-3, -1, +1, +3}/sqrt(5). A trailing partial group is
    zero-padded.
    """
    try:
        scheme = Modulation(scheme)
    except ValueError:
        raise ConfigurationError(f"unsupported modulation scheme: {scheme!r}") from None
    bits = np.asarray(bits, dtype=np.int64).ravel()
    if bits.size == 0:
        raise InputError("bits must be non-empty")
    k = scheme.bits_per_symbol
    pad = (-bits.size) % k
    if pad:
        bits = np.concatenate([bits, np.zeros(pad, dtype=np.int64)])
    groups = bits.reshape(-1, k)
    if scheme is Modulation.BPSK:
        return (2.0 * groups[:, 0] - 1.0).astype(np.complex128)
    if scheme is Modulation.QPSK:
        return ((2.0 * groups[:, 0] - 1.0) + 1j * (2.0 * groups[:, 1] - 1.0)) / math.sqrt(2.0)
    if scheme is Modulation.PAM4:
        return (_GRAY4[2 * groups[:, 0] + groups[:, 1]] / math.sqrt(5.0)).astype(np.complex128)
    i = _GRAY4[2 * groups[:, 0] + groups[:, 1]]
    q = _GRAY4[2 * groups[:, 2] + groups[:, 3]]
    return (i + 1j * q) / math.sqrt(10.0)


def raised_cosine_taps(rolloff: float, span_symbols: int, sps: int) -> np.ndarray:
    """Raised-cosine impulse response with unit peak, ``span_symbols * sps + 1`` taps."""
    if not 0.0 <= rolloff <= 1.0:
        raise ConfigurationError(f"rolloff must be in [0, 1], got {rolloff}")
    if sps < 2:
        raise ConfigurationError(f"samples per symbol must be >= 2, got {sps}")
    if span_symbols < 1:
        raise ConfigurationError(f"span must be >= 1 symbol, got {span_symbols}")
    t = np.arange(-span_symbols * sps // 2, span_symbols * sps // 2 + 1) / sps
    h = np.sinc(t)
    if rolloff > 0:
        denom = 1.0 - (2.0 * rolloff * t) ** 2
        singular = np.isclose(denom, 0.0)
        safe = np.where(singular, 1.0, denom)
        h = np.where(
            singular,
            (np.pi / 4.0) * np.sinc(1.0 / (2.0 * rolloff)),
            h * np.cos(np.pi * rolloff * t) / safe,
        )
    return h


def pulse_shape(symbols, rolloff: float = 0.35, span_symbols: int = 10, sps: int = 8) -> np.ndarray:
    """Upsample by ``sps`` and filter with a raised cosine.

    Output length is ``(len(symbols) - 1) * sps + num_taps``, so a single unit
    symbol reproduces the tap vector exactly.
    """
    taps = raised_cosine_taps(rolloff, span_symbols, sps)
    symbols = np.asarray(symbols, dtype=np.complex128).ravel()
    if symbols.size == 0:
        raise InputError("symbols must be non-empty")
    up = np.zeros((symbols.size - 1) * sps + 1, dtype=np.complex128)
    up[::sps] = symbols
    return np.convolve(up, taps)


def resample(samples, ratio) -> np.ndarray:
    """Polyphase rational resampling by ``up/down``.

    ``ratio`` is a ``(up, down)`` pair or anything ``Fraction`` accepts.
    Output length is ``floor(len * up / down)``.
    """
    if isinstance(ratio, tuple):
        up, down = int(ratio[0]), int(ratio[1])
    else:
        frac = Fraction(ratio)
        up, down = frac.numerator, frac.denominator
    if up <= 0 or down <= 0:
        raise ConfigurationError(f"resampling factors must be positive, got {up}/{down}")
    x = np.asarray(samples, dtype=np.complex128).ravel()
    g = math.gcd(up, down)
    up, down = up // g, down // g
    n_out = (x.size * up) // down
    if up == down:
        return x.copy()
    y = sps.resample_poly(x, up, down)
    return y[:n_out]


def frequency_shift(frame: BasebandFrame, f_o: float) -> BasebandFrame:
    """Multiply by ``exp(-j 2 pi f_o t)``: content at ``+f_o`` moves to DC."""
    frame = _as_frame(frame)
    if abs(f_o) >= frame.sample_rate_hz / 2:
        raise AliasingError(f"|f_o|={abs(f_o)} Hz must be below fs/2={frame.sample_rate_hz / 2} Hz")
    if f_o == 0:
        return frame.replace(frame.samples.copy())
    n = np.arange(frame.samples.size)
    rot = np.exp(-2j * np.pi * (f_o / frame.sample_rate_hz) * n)
    return frame.replace(frame.samples * rot)


def ideal_lowpass_taps(bandwidth_hz: float, sample_rate_hz: float, num_taps: int) -> np.ndarray:
    """Truncated ideal sinc ``(B/fs) sinc((B/fs) n)``, no window, no renormalization."""
    if num_taps < 1 or num_taps % 2 == 0:
        raise ConfigurationError(f"num_taps must be odd and positive, got {num_taps}")
    if not 0 < bandwidth_hz < sample_rate_hz:
        raise ConfigurationError(
            f"bandwidth must satisfy 0 < B < fs, got B={bandwidth_hz}, fs={sample_rate_hz}"
        )
    ratio = bandwidth_hz / sample_rate_hz
    n = np.arange(num_taps) - (num_taps - 1) // 2
    return ratio * np.sinc(ratio * n)


def design_lowpass(bandwidth_hz: float, sample_rate_hz: float, num_taps: int = DEFAULT_NUM_TAPS) -> FirFilter:
    """Hamming-windowed sinc lowpass passing ``|f| < B/2``, DC gain renormalized to 1."""
    h = ideal_lowpass_taps(bandwidth_hz, sample_rate_hz, num_taps) * np.hamming(num_taps)
    h = h / h.sum()
    return FirFilter(taps=h, cutoff_hz=bandwidth_hz / 2.0)


def apply_fir(frame: BasebandFrame, fir: FirFilter) -> BasebandFrame:
    """Centered ('same') convolution; output is aligned with the input."""
    frame = _as_frame(frame)
    taps = np.asarray(fir.taps)
    if frame.samples.size < taps.size:
        raise InputError(f"frame length {frame.samples.size} shorter than filter ({taps.size} taps)")
    return frame.replace(np.convolve(frame.samples, taps, mode="same"))


def normalize_power(frame: BasebandFrame) -> BasebandFrame:
    frame = _as_frame(frame)
    power = np.mean(np.abs(frame.samples) ** 2)
    if power == 0:
        raise DegenerateInputError("cannot normalize an all-zero frame")
    return frame.replace(frame.samples / np.sqrt(power))


def awgn(frame: BasebandFrame, snr_db: float, rng: np.random.Generator) -> BasebandFrame:
    """Add complex white Gaussian noise of total variance ``10**(-snr_db/10)``.

    Assumes a unit-power input. ``snr_db=inf`` returns the frame unchanged.
    """
    frame = _as_frame(frame)
    if np.isposinf(snr_db):
        return frame.replace(frame.samples.copy())
    sigma = np.sqrt(10.0 ** (-snr_db / 10.0) / 2.0)
    n = frame.samples.size
    noise = sigma * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return frame.replace(frame.samples + noise)


def rician_channel(frame: BasebandFrame, config: RicianConfig | None = None, rng: np.random.Generator | None = None) -> BasebandFrame:
    """Line-of-sight copy plus one delayed, randomly phased scattered path."""
    frame = _as_frame(frame)
    cfg = config or RicianConfig()
    if cfg.k_factor < 0:
        raise ConfigurationError(f"K factor must be non-negative, got {cfg.k_factor}")
    if cfg.delay_samples < 0:
        raise ConfigurationError(f"delay must be non-negative, got {cfg.delay_samples}")
    if np.isposinf(cfg.k_factor):
        return frame.replace(frame.samples.copy())
    k = cfg.k_factor
    los = np.sqrt(k / (k + 1.0))
    out = los * frame.samples
    gain = 0.0 if np.isneginf(cfg.scatter_gain_db) else 10.0 ** (cfg.scatter_gain_db / 20.0)
    if gain == 0.0:
        return frame.replace(out)
    if rng is None:
        raise ConfigurationError("a seeded generator is required for the scattered path")
    h = (rng.standard_normal() + 1j * rng.standard_normal()) / np.sqrt(2.0)
    d = cfg.delay_samples
    delayed = np.zeros_like(frame.samples)
    delayed[d:] = frame.samples[: frame.samples.size - d] if d else frame.samples
    out = out + np.sqrt(1.0 / (k + 1.0)) * gain * h * delayed
    return frame.replace(out)


def fft_db(frame: BasebandFrame, fft_size: int = DEFAULT_FFT_SIZE) -> SpectrumFrame:
    """Centered ``20 log10 |FFT|`` of the first ``fft_size`` samples, floored at -120 dB.

    The transform is scaled by ``1/sqrt(fft_size)`` so unit-power white noise
    sits near 0 dB per bin.
    """
    frame = _as_frame(frame)
    if frame.samples.size < fft_size:
        raise InputError(f"frame length {frame.samples.size} shorter than fft_size {fft_size}")
    spec = np.fft.fftshift(np.fft.fft(frame.samples[:fft_size])) / np.sqrt(fft_size)
    mag = np.abs(spec)
    floor = 10.0 ** (DB_FLOOR / 20.0)
    db = 20.0 * np.log10(np.maximum(mag, floor))
    return SpectrumFrame(db)


def hz_to_bin(freq_hz, sample_rate_hz: float, fft_size: int = DEFAULT_FFT_SIZE):
    """Centered-spectrum bin index (fractional) of a baseband frequency."""
    return fft_size / 2 + fft_size * np.asarray(freq_hz, dtype=np.float64) / sample_rate_hz


def bin_to_hz(bin_index, sample_rate_hz: float, fft_size: int = DEFAULT_FFT_SIZE):
    return (np.asarray(bin_index, dtype=np.float64) - fft_size / 2) * sample_rate_hz / fft_size
