"""Shared oracles and fixture builders for the test suite.

The oracles here are deliberately independent of the library internals:
the DFT oracle is a direct O(N^2) sum, slopes are plain least squares on
log-log points, and sequence/model builders only use public constructors.
"""

from __future__ import annotations

import math

import numpy as np

from lockinsim.lockin import CpmgSequence
from lockinsim.readout import ReadoutModel


def brute_force_power(values: np.ndarray) -> np.ndarray:
    """One-sided unnormalized power spectrum via a direct O(N^2) DFT sum."""
    y = np.asarray(values, dtype=float)
    n = y.size
    k = np.arange(n // 2 + 1)
    j = np.arange(n)
    basis = np.exp(-2j * math.pi * np.outer(k, j) / n)
    return np.abs(basis @ y) ** 2


def two_sided_total(power_one_sided: np.ndarray, num_samples: int) -> float:
    """Total two-sided spectral power implied by a one-sided spectrum."""
    total = float(power_one_sided[0])
    if num_samples % 2 == 0:
        total += float(power_one_sided[-1])
        total += 2.0 * float(np.sum(power_one_sided[1:-1]))
    else:
        total += 2.0 * float(np.sum(power_one_sided[1:]))
    return total


def loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log(y) against log(x)."""
    return float(np.polyfit(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)), 1)[0])


def resonant_sequence(frequency_hz: float, pulse_count: int = 32, harmonic: int = 1) -> CpmgSequence:
    """CPMG sequence tuned exactly on resonance with ``frequency_hz``."""
    return CpmgSequence.for_frequency(frequency_hz, pulse_count, harmonic=harmonic)


def standard_model(qnd_repetitions: int = 260, contrast: float = 0.35, **kwargs) -> ReadoutModel:
    """Readout model at the reference operating point (C = 27.3 photons)."""
    return ReadoutModel(qnd_repetitions=qnd_repetitions, contrast=contrast, **kwargs)


def omega_for_phi_max(phi_max: float, sensing_time_s: float, harmonic: int = 1) -> float:
    """Signal amplitude (rad/s) that yields ``phi_max`` on resonance."""
    return phi_max * harmonic * math.pi / (2.0 * sensing_time_s)
