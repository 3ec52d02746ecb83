"""Energy-threshold spectrum sensing baseline.

The frame's noise threshold is its mean plus population standard deviation
(in dB). Bins are scanned left to right; an excursion opens on the first bin
above the threshold and closes only after ``hysteresis_count`` consecutive
bins at or below it. The trailing below-threshold run is not part of the
emitted interval. Every detection carries score 1.0.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, InputError
from .geometry import Detection, Interval


@dataclass(frozen=True)
class EnergyDetectorConfig:
    hysteresis_count: int = 5
    min_width_bins: int = 2

    def __post_init__(self):
        if self.hysteresis_count < 1:
            raise ConfigurationError(f"hysteresis_count must be >= 1, got {self.hysteresis_count}")
        if self.min_width_bins < 1:
            raise ConfigurationError(f"min_width_bins must be >= 1, got {self.min_width_bins}")


def noise_threshold(spectrum) -> float:
    s = np.asarray(spectrum, dtype=np.float64)
    if s.size == 0:
        raise InputError("empty spectrum")
    mu = s.mean()
    return float(mu + np.sqrt(np.mean((s - mu) ** 2)))


def energy_intervals(spectrum, cfg: EnergyDetectorConfig = EnergyDetectorConfig()) -> np.ndarray:
    """Detected excursions as an int64 ``(n, 2)`` array, sorted by start."""
    s = np.asarray(spectrum, dtype=np.float64)
    gamma = noise_threshold(s)
    return kernels.energy_scan(s, gamma, cfg.hysteresis_count, cfg.min_width_bins)


def energy_detect(spectrum, cfg: EnergyDetectorConfig = EnergyDetectorConfig()) -> list[Detection]:
    return [Detection(Interval(float(a), float(b)), 0, 1.0) for a, b in energy_intervals(spectrum, cfg)]
