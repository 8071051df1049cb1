"""
Deterministic test signals: speech surrogates and background noise.

A speech surrogate alternates syllable-like bursts and pauses. Voiced bursts
are a glottal pulse train shaped by formant resonators; unvoiced bursts are
high-passed noise. Pauses keep a quiet floor instead of digital silence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Optional, Tuple
import logging

import numpy as np
from scipy.signal import butter, lfilter, sosfilt

from multisource_separator.exceptions import ConfigError

logger = logging.getLogger(__name__)

# Pole-zero approximation of a 1/f spectrum (-3 dB/octave).
PINK_B = np.array([0.049922035, -0.095993537, 0.050612699, -0.004408786])
PINK_A = np.array([1.0, -2.494956002, 2.017265875, -0.522189400])
_PINK_SETTLE = 4096


@dataclass
class SurrogateParams:
    """Voice characteristics of a speech surrogate."""
    f0: float = 120.0  # Hz, mean fundamental
    vibrato: float = 0.05  # relative depth of the slow f0 modulation
    formants: Tuple[float, ...] = (500.0, 1500.0, 2500.0)
    bandwidths: Tuple[float, ...] = (80.0, 110.0, 160.0)
    syllable_s: Tuple[float, float] = (0.15, 0.35)  # burst duration range
    pause_s: Tuple[float, float] = (0.05, 0.25)
    unvoiced_fraction: float = 0.25
    floor_db: float = -60.0  # level of the pauses relative to the bursts
    rms: float = 0.1
    highpass_hz: float = 100.0  # removes DC and rumble; 0 disables

    def __post_init__(self):
        self.formants = tuple(float(f) for f in self.formants)
        self.bandwidths = tuple(float(b) for b in self.bandwidths)
        if len(self.formants) != len(self.bandwidths):
            raise ConfigError("Surrogate formants and bandwidths must have the same length")
        if self.f0 <= 0 or self.rms <= 0:
            raise ConfigError("Surrogate f0 and rms must be positive")
        if not 0.0 <= self.unvoiced_fraction <= 1.0:
            raise ConfigError("Surrogate unvoiced_fraction must lie in [0, 1]")
        if self.highpass_hz < 0:
            raise ConfigError(f"Surrogate highpass_hz must be >= 0, got {self.highpass_hz}")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "SurrogateParams":
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        for key in ("formants", "bandwidths", "syllable_s", "pause_s"):
            if key in known:
                known[key] = tuple(known[key])
        unknown = set(data) - set(known)
        if unknown:
            raise ConfigError(f"Unknown surrogate parameters: {sorted(unknown)}")
        return cls(**known)


def white_noise(num_samples: int, rng: np.random.Generator) -> np.ndarray:
    return rng.standard_normal(num_samples)


def pink_noise(num_samples: int, rng: np.random.Generator) -> np.ndarray:
    """White noise through the pink pole-zero filter, start-up transient discarded."""
    white = rng.standard_normal(num_samples + _PINK_SETTLE)
    return lfilter(PINK_B, PINK_A, white)[_PINK_SETTLE:]


def _envelope(num_samples: int, sample_rate: int, params: SurrogateParams, rng) -> list:
    """[(start, stop, voiced)] bursts covering the signal, pauses between them."""
    bursts = []
    t = int(rng.uniform(*params.pause_s) * sample_rate)
    while t < num_samples:
        length = int(rng.uniform(*params.syllable_s) * sample_rate)
        voiced = rng.uniform() >= params.unvoiced_fraction
        bursts.append((t, min(t + length, num_samples), voiced))
        t += length + int(rng.uniform(*params.pause_s) * sample_rate)
    return bursts


def _formant_filter(excitation: np.ndarray, sample_rate: int, params: SurrogateParams) -> np.ndarray:
    out = excitation
    for freq, bw in zip(params.formants, params.bandwidths):
        if freq >= sample_rate / 2:
            continue
        r = np.exp(-np.pi * bw / sample_rate)
        theta = 2.0 * np.pi * freq / sample_rate
        out = lfilter([1.0 - r], [1.0, -2.0 * r * np.cos(theta), r * r], out)
    return out


def speech_surrogate(
    num_samples: int,
    sample_rate: int,
    rng: np.random.Generator,
    params: Optional[SurrogateParams] = None,
) -> np.ndarray:
    """
    Generate a speech-like test signal.

    Args:
        num_samples: Output length
        sample_rate: Hz
        rng: Seeded generator; identical generators give identical signals
        params: Voice characteristics

    Returns:
        (num_samples,) signal with RMS params.rms over its bursts
    """
    params = params or SurrogateParams()
    if num_samples <= 0:
        return np.zeros(max(num_samples, 0))
    t = np.arange(num_samples) / sample_rate

    # Glottal pulses: one impulse per period of a slowly modulated f0.
    f0 = params.f0 * (1.0 + params.vibrato * np.sin(2.0 * np.pi * 3.0 * t + rng.uniform(0, 2 * np.pi)))
    phase = np.cumsum(f0) / sample_rate
    pulses = np.zeros(num_samples)
    pulses[1:][np.diff(np.floor(phase)) > 0] = 1.0
    voiced = _formant_filter(pulses + 0.05 * rng.standard_normal(num_samples), sample_rate, params)

    cutoff = min(3000.0, 0.4 * sample_rate)
    sos = butter(4, cutoff / (sample_rate / 2.0), btype="highpass", output="sos")
    unvoiced = sosfilt(sos, rng.standard_normal(num_samples))
    if 0.0 < params.highpass_hz < 0.5 * sample_rate:
        rumble = butter(4, params.highpass_hz / (sample_rate / 2.0), btype="highpass", output="sos")
        voiced = sosfilt(rumble, voiced)
        unvoiced = sosfilt(rumble, unvoiced)
    voiced = voiced / max(float(np.sqrt(np.mean(voiced ** 2))), np.finfo(np.float64).tiny)
    unvoiced = 0.5 * unvoiced / max(float(np.sqrt(np.mean(unvoiced ** 2))), np.finfo(np.float64).tiny)

    gate = np.zeros(num_samples)
    source = np.zeros(num_samples)
    ramp_len = max(int(0.01 * sample_rate), 1)
    for start, stop, is_voiced in _envelope(num_samples, sample_rate, params, rng):
        length = stop - start
        window = np.ones(length)
        edge = min(ramp_len, length // 2)
        if edge:
            ramp = 0.5 - 0.5 * np.cos(np.pi * np.arange(edge) / edge)
            window[:edge] = ramp
            window[length - edge:] = ramp[::-1]
        gate[start:stop] = window
        source[start:stop] = (voiced if is_voiced else unvoiced)[start:stop]

    active = gate > 0.5
    level = np.sqrt(np.mean(source[active] ** 2)) if np.any(active) else 0.0
    if level > 0:
        source = source * (params.rms / level)
    floor = params.rms * 10.0 ** (params.floor_db / 20.0) * white_noise(num_samples, rng)
    signal = gate * source + (1.0 - gate) * floor
    logger.debug(
        f"Speech surrogate: {num_samples} samples, activity {float(active.mean()):.0%}"
    )
    return signal
