"""
Noise variance estimation for the separated channels.

For source m the noise variance is the sum of a stationary part, tracked by
minima-controlled recursive averaging on |Y_m|^2, and a leakage part equal to
eta times the smoothed power of every other separated channel.

All arrays carry the sources on the leading axis, shape (M, K); every
recursion is elementwise per source row, so the estimator of one source never
reads another source's state except through leakage_estimate().
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Union
import logging

import numpy as np

from multisource_separator.config import McraConfig

logger = logging.getLogger(__name__)


@dataclass
class SmoothedSpectrum:
    """First-order smoothed power per source and bin."""
    power: np.ndarray  # (M, K), >= 0
    alpha_s: float = 0.7


@dataclass
class McraState:
    """
    Minima-controlled recursive averaging state.

    Attributes:
        smoothed: Time-smoothed power P
        minimum: Running minimum P_min over the tracking window
        window_minimum: Minimum since the last window restart, P_tmp
        frame_count: Frames processed so far
        noise: Stationary noise estimate lambda_stat
        presence: Smoothed speech-presence indicator p'
        speech: Indicator of the last frame (P > delta * P_min)
    """
    smoothed: np.ndarray
    minimum: np.ndarray
    window_minimum: np.ndarray
    frame_count: int
    noise: np.ndarray
    presence: np.ndarray
    speech: np.ndarray

    @classmethod
    def initial(cls, shape) -> "McraState":
        zeros = np.zeros(shape)
        return cls(
            smoothed=zeros.copy(),
            minimum=zeros.copy(),
            window_minimum=zeros.copy(),
            frame_count=0,
            noise=zeros.copy(),
            presence=zeros.copy(),
            speech=np.zeros(shape, dtype=bool),
        )


@dataclass
class NoiseEstimate:
    """lambda = lambda_stat + lambda_leak, components kept for diagnostics."""
    total: np.ndarray
    stationary: np.ndarray
    leakage: np.ndarray


def smooth_spectrum_update(
    previous: Optional[SmoothedSpectrum],
    power: np.ndarray,
    alpha_s: float = 0.7,
) -> SmoothedSpectrum:
    """
    One step of S(k,l) = alpha_s S(k,l-1) + (1 - alpha_s) |Y(k,l)|^2.

    Args:
        previous: Spectrum of frame l-1, or None at l = 0 (then S = |Y|^2)
        power: |Y(k,l)|^2, nonnegative
        alpha_s: Smoothing constant

    Returns:
        Smoothed spectrum of frame l
    """
    power = np.asarray(power, dtype=np.float64)
    if previous is None:
        return SmoothedSpectrum(power=power.copy(), alpha_s=alpha_s)
    if previous.power.shape != power.shape:
        raise ValueError(
            f"Smoothed spectrum shape {previous.power.shape} does not match {power.shape}"
        )
    return SmoothedSpectrum(
        power=alpha_s * previous.power + (1.0 - alpha_s) * power,
        alpha_s=alpha_s,
    )


def leakage_estimate(
    smoothed: Union[SmoothedSpectrum, np.ndarray],
    m: int,
    eta: float,
) -> np.ndarray:
    """
    Leakage variance for source m: eta times the sum of the other sources' spectra.

    Args:
        smoothed: Smoothed spectra of all M sources for the current frame, (M, K)
        m: Source index
        eta: Leakage factor on the power scale

    Returns:
        (K,) leakage variance; zeros when M = 1
    """
    power = smoothed.power if isinstance(smoothed, SmoothedSpectrum) else np.asarray(smoothed)
    if not 0 <= m < power.shape[0]:
        raise IndexError(f"Source index {m} out of range for {power.shape[0]} sources")
    others = np.delete(power, m, axis=0)
    if others.shape[0] == 0:
        return np.zeros(power.shape[1:])
    return eta * others.sum(axis=0)


def leakage_estimates(smoothed: Union[SmoothedSpectrum, np.ndarray], eta: float) -> np.ndarray:
    """leakage_estimate() for every source, stacked to (M, K)."""
    power = smoothed.power if isinstance(smoothed, SmoothedSpectrum) else np.asarray(smoothed)
    return np.stack([leakage_estimate(power, m, eta) for m in range(power.shape[0])])


def mcra_update(
    state: McraState,
    power: np.ndarray,
    cfg: Optional[McraConfig] = None,
) -> McraState:
    """
    Advance the stationary noise estimator by one frame.

    The first cfg.init_frames frames seed lambda_stat with the running mean of
    the input power. Afterwards a bin whose smoothed power exceeds
    ratio_threshold times its tracked minimum is treated as speech and keeps
    its estimate; the remaining bins average the input in with the
    presence-weighted constant alpha_d + (1 - alpha_d) p'. The result is
    capped at cfg.min_bias times the tracked minimum.

    Args:
        state: State after frame l-1 (McraState.initial() before the first frame)
        power: |Y(k,l)|^2, nonnegative
        cfg: MCRA constants

    Returns:
        New state; state.noise is lambda_stat for frame l
    """
    cfg = cfg or McraConfig()
    power = np.asarray(power, dtype=np.float64)
    if power.shape != state.noise.shape:
        raise ValueError(f"Power shape {power.shape} does not match state {state.noise.shape}")

    count = state.frame_count
    if count == 0:
        return McraState(
            smoothed=power.copy(),
            minimum=power.copy(),
            window_minimum=power.copy(),
            frame_count=1,
            noise=power.copy(),
            presence=np.zeros_like(power),
            speech=np.zeros(power.shape, dtype=bool),
        )

    smoothed = cfg.alpha_power * state.smoothed + (1.0 - cfg.alpha_power) * power
    if count % cfg.window_frames == 0:
        minimum = np.minimum(state.window_minimum, smoothed)
        window_minimum = smoothed.copy()
    else:
        minimum = np.minimum(state.minimum, smoothed)
        window_minimum = np.minimum(state.window_minimum, smoothed)

    speech = smoothed > cfg.ratio_threshold * minimum
    presence = cfg.alpha_presence * state.presence + (1.0 - cfg.alpha_presence) * speech

    if count < cfg.init_frames:
        noise = state.noise + (power - state.noise) / (count + 1)
        if count + 1 == cfg.init_frames:
            logger.debug(f"Stationary noise seeded from {cfg.init_frames} frames")
    else:
        alpha_d = cfg.alpha_noise + (1.0 - cfg.alpha_noise) * presence
        noise = np.where(speech, state.noise, alpha_d * state.noise + (1.0 - alpha_d) * power)
    if cfg.min_bias:
        # Bias-corrected minimum bounds lambda_stat from above.
        noise = np.minimum(noise, cfg.min_bias * minimum)

    return McraState(
        smoothed=smoothed,
        minimum=minimum,
        window_minimum=window_minimum,
        frame_count=count + 1,
        noise=noise,
        presence=presence,
        speech=speech,
    )


def total_noise(stationary: np.ndarray, leakage: np.ndarray) -> NoiseEstimate:
    """
    Combine the two noise components.

    Raises:
        ValueError: If a component is negative or the shapes differ
    """
    stationary = np.asarray(stationary, dtype=np.float64)
    leakage = np.asarray(leakage, dtype=np.float64)
    if stationary.shape != leakage.shape:
        raise ValueError(f"Noise components differ in shape: {stationary.shape} vs {leakage.shape}")
    if np.any(stationary < 0) or np.any(leakage < 0):
        raise ValueError("Noise components must be nonnegative")
    return NoiseEstimate(total=stationary + leakage, stationary=stationary, leakage=leakage)
