"""
Loudness-domain spectral post-filter.

Per bin, the filter estimates the a posteriori SNR gamma = |Y|^2 / lambda and
the decision-directed a priori SNR xi, evaluates the MMSE gain of the spectral
amplitude raised to the power alpha (alpha = 1/2: loudness domain) under the
speech-present hypothesis, weights it with the speech-presence probability and
multiplies the separated spectrum by the result. Phase is never modified.

The noise variance lambda combines the stationary estimate of each channel
with the leakage from the other separated channels (see core.noise).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union
import logging

import numpy as np
from scipy.ndimage import uniform_filter1d
from scipy.special import gamma as _gamma

from multisource_separator.config import McraConfig, PostfilterConfig
from multisource_separator.core import noise as noise_mod
from multisource_separator.core.noise import McraState, NoiseEstimate, SmoothedSpectrum
from multisource_separator.core.specfun import X_MIN, kummer_m
from multisource_separator.core.stft import SpectralFrame

logger = logging.getLogger(__name__)


@dataclass
class GainState:
    """
    Per-bin recursive quantities of the gain computation, shape (M, K).

    g_h1 and gamma of the previous frame feed the decision-directed a priori
    SNR; frame_speech is the per-source frame-level latch.
    """
    xi: np.ndarray
    gamma: np.ndarray
    upsilon: np.ndarray
    g_h1: np.ndarray
    p: np.ndarray
    q: np.ndarray
    gain: np.ndarray
    frame_speech: np.ndarray  # (M,) bool
    frame_count: int = 0

    @classmethod
    def initial(cls, shape) -> "GainState":
        zeros = np.zeros(shape)
        return cls(
            xi=zeros.copy(),
            gamma=zeros.copy(),
            upsilon=zeros.copy(),
            g_h1=zeros.copy(),
            p=zeros.copy(),
            q=np.ones(shape),
            gain=zeros.copy(),
            frame_speech=np.zeros(shape[:-1], dtype=bool),
        )


@dataclass
class SpeechAbsence:
    """A priori speech-absence probability and the three activity measures."""
    q: np.ndarray
    p_local: np.ndarray
    p_global: np.ndarray
    p_frame: np.ndarray  # (M,) in {0, 1}
    frame_speech: np.ndarray  # latch state after this frame


def a_posteriori_snr(
    power: np.ndarray,
    noise: Union[NoiseEstimate, np.ndarray],
    floor: float = np.finfo(np.float64).tiny,
) -> np.ndarray:
    """
    gamma(k) = |Y(k)|^2 / max(lambda(k), floor).

    Args:
        power: |Y(k)|^2
        noise: Noise estimate (or its total variance)
        floor: Lower bound on lambda
    """
    variance = noise.total if isinstance(noise, NoiseEstimate) else np.asarray(noise)
    return np.asarray(power, dtype=np.float64) / np.maximum(variance, floor)


def a_priori_snr(
    g_h1_prev: Optional[np.ndarray],
    gamma_prev: Optional[np.ndarray],
    gamma_now: np.ndarray,
    alpha_p: float = 0.92,
) -> np.ndarray:
    """
    Decision-directed a priori SNR.

    xi = alpha_p G_H1(l-1)^2 gamma(l-1) + (1 - alpha_p) max(gamma(l) - 1, 0);
    on the first frame (no previous values) xi = max(gamma - 1, 0).
    """
    ml = np.maximum(np.asarray(gamma_now, dtype=np.float64) - 1.0, 0.0)
    if g_h1_prev is None or gamma_prev is None:
        return ml
    return alpha_p * np.square(g_h1_prev) * gamma_prev + (1.0 - alpha_p) * ml


def gain_h1(
    xi: np.ndarray,
    gamma: np.ndarray,
    alpha: float = 0.5,
    g_max: float = 1.0,
) -> np.ndarray:
    """
    MMSE gain of |X|^alpha under speech presence.

    G_H1 = (sqrt(upsilon) / gamma) * [Gamma(1 + alpha/2) M(-alpha/2; 1; -upsilon)]^(1/alpha)
    with upsilon = gamma xi / (xi + 1). Clamped to [0, g_max]; gamma = 0 gives 0.

    Args:
        xi: A priori SNR, >= 0
        gamma: A posteriori SNR, >= 0
        alpha: Amplitude exponent in (0, 2]
        g_max: Gain ceiling
    """
    if not 0.0 < alpha <= 2.0:
        raise ValueError(f"alpha must lie in (0, 2], got {alpha}")
    xi = np.asarray(xi, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    xi, gamma = np.broadcast_arrays(xi, gamma)

    upsilon = gamma * xi / (xi + 1.0)
    gain = np.zeros(upsilon.shape)
    active = (gamma > 0.0) & (upsilon > 0.0)

    # Beyond the tabulated Kummer domain the gain has reached its
    # large-argument limit xi / (xi + 1) to within ~1/upsilon.
    huge = active & (upsilon > -X_MIN)
    gain[huge] = xi[huge] / (xi[huge] + 1.0)

    regular = active & ~huge
    if np.any(regular):
        v = upsilon[regular]
        bracket = _gamma(1.0 + alpha / 2.0) * kummer_m(-alpha / 2.0, 1.0, -v)
        gain[regular] = np.sqrt(v) / gamma[regular] * np.power(bracket, 1.0 / alpha)
    return np.clip(gain, 0.0, g_max)


def speech_presence_probability(
    xi: np.ndarray,
    upsilon: np.ndarray,
    q: np.ndarray,
) -> np.ndarray:
    """
    p = {1 + q/(1-q) (1+xi) exp(-upsilon)}^-1, with p = 1 at q = 0 and p = 0 at q = 1.
    """
    xi, upsilon, q = np.broadcast_arrays(
        np.asarray(xi, dtype=np.float64),
        np.asarray(upsilon, dtype=np.float64),
        np.asarray(q, dtype=np.float64),
    )
    p = np.empty(q.shape)
    absent = q >= 1.0
    present = q <= 0.0
    middle = ~(absent | present)
    p[absent] = 0.0
    p[present] = 1.0
    if np.any(middle):
        qm = q[middle]
        ratio = qm / (1.0 - qm) * (1.0 + xi[middle]) * np.exp(-upsilon[middle])
        p[middle] = 1.0 / (1.0 + ratio)
    return p


def soft_ramp(zeta: np.ndarray, zeta_min: float, zeta_max: float) -> np.ndarray:
    """0 below zeta_min, 1 above zeta_max, linear in log(zeta) between."""
    zeta = np.maximum(np.asarray(zeta, dtype=np.float64), zeta_min)
    return np.clip(np.log(zeta / zeta_min) / np.log(zeta_max / zeta_min), 0.0, 1.0)


def a_priori_speech_absence(
    smoothed_power: np.ndarray,
    noise: np.ndarray,
    cfg: Optional[PostfilterConfig] = None,
    frame_speech: Optional[np.ndarray] = None,
    floor: float = np.finfo(np.float64).tiny,
) -> SpeechAbsence:
    """
    q = 1 - P_local P_global P_frame from zeta = S / lambda.

    P_local and P_global map zeta averaged over a short and a long frequency
    window through the soft ramp. P_frame is a speech/silence latch on the
    frame-mean zeta: it switches on above cfg.frame_on and off below
    cfg.frame_off.

    Args:
        smoothed_power: Smoothed spectra S, shape (M, K)
        noise: Noise variance used as reference (lambda_stat by default), (M, K)
        cfg: Post-filter settings
        frame_speech: Latch state from the previous frame, (M,); off when None
        floor: Lower bound on the noise variance
    """
    cfg = cfg or PostfilterConfig()
    smoothed_power = np.atleast_2d(np.asarray(smoothed_power, dtype=np.float64))
    noise = np.atleast_2d(np.asarray(noise, dtype=np.float64))
    zeta = smoothed_power / np.maximum(noise, floor)

    local = uniform_filter1d(zeta, size=cfg.local_window, axis=-1, mode="nearest")
    wide = uniform_filter1d(zeta, size=cfg.global_window, axis=-1, mode="nearest")
    p_local = soft_ramp(local, cfg.zeta_min, cfg.zeta_max)
    p_global = soft_ramp(wide, cfg.zeta_min, cfg.zeta_max)

    frame_mean = zeta.mean(axis=-1)
    was_on = (
        np.zeros(frame_mean.shape, dtype=bool) if frame_speech is None
        else np.asarray(frame_speech, dtype=bool)
    )
    now_on = np.where(was_on, frame_mean >= cfg.frame_off, frame_mean > cfg.frame_on)
    p_frame = now_on.astype(np.float64)

    q = 1.0 - p_local * p_global * p_frame[:, None]
    return SpeechAbsence(
        q=np.clip(q, 0.0, 1.0),
        p_local=p_local,
        p_global=p_global,
        p_frame=p_frame,
        frame_speech=now_on,
    )


def final_gain(
    p: np.ndarray,
    g_h1: np.ndarray,
    g_min: float = 0.0,
    alpha: float = 0.5,
) -> np.ndarray:
    """
    G = [p G_H1^alpha + (1 - p) G_min^alpha]^(1/alpha).

    For alpha = 1/2 and G_min = 0 this is p^2 G_H1, which is what gets computed.
    """
    p = np.asarray(p, dtype=np.float64)
    g_h1 = np.asarray(g_h1, dtype=np.float64)
    if alpha == 0.5 and g_min == 0.0:
        return p * p * g_h1
    return np.power(p * np.power(g_h1, alpha) + (1.0 - p) * g_min ** alpha, 1.0 / alpha)


def apply_gain(
    spectrum: Union[SpectralFrame, np.ndarray],
    gain: np.ndarray,
) -> Union[SpectralFrame, np.ndarray]:
    """
    X = G Y with a real gain, phase untouched.

    Raises:
        ValueError: If the shapes differ
    """
    bins = spectrum.bins if isinstance(spectrum, SpectralFrame) else np.asarray(spectrum)
    gain = np.asarray(gain, dtype=np.float64)
    if gain.shape != bins.shape:
        raise ValueError(f"Gain shape {gain.shape} does not match spectrum shape {bins.shape}")
    out = bins * gain
    if isinstance(spectrum, SpectralFrame):
        return SpectralFrame(index=spectrum.index, bins=out)
    return out


@dataclass
class FilterOutput:
    """Result of one post-filter frame, all arrays (M, K)."""
    spectrum: np.ndarray
    gain: np.ndarray
    noise: NoiseEstimate
    p: np.ndarray
    q: np.ndarray


@dataclass
class LeakagePostFilter:
    """
    Frame-sequential post-filter for M separated channels.

    With M = 1 or eta = 0 it is a single-channel enhancer driven by the
    stationary noise estimate alone.
    """
    num_sources: int
    num_bins: int
    config: PostfilterConfig = field(default_factory=PostfilterConfig)
    mcra_config: McraConfig = field(default_factory=McraConfig)

    def __post_init__(self):
        shape = (self.num_sources, self.num_bins)
        self.smoothed: Optional[SmoothedSpectrum] = None
        self.mcra = McraState.initial(shape)
        self.gains = GainState.initial(shape)
        self.noise: Optional[NoiseEstimate] = None
        self._power_mean = 0.0
        self._frames = 0

    @property
    def frame_count(self) -> int:
        return self._frames

    def noise_floor(self) -> float:
        """floor_factor x mean input power seen so far."""
        return max(self.config.floor_factor * self._power_mean, np.finfo(np.float64).tiny)

    def process(self, spectrum: np.ndarray) -> FilterOutput:
        """
        Filter one frame of separated spectra.

        Args:
            spectrum: Complex (M, K) LSS output Y for the current frame

        Returns:
            FilterOutput with X = G Y and the intermediate estimates
        """
        cfg = self.config
        spectrum = np.asarray(spectrum)
        if spectrum.shape != (self.num_sources, self.num_bins):
            raise ValueError(
                f"Expected spectra of shape {(self.num_sources, self.num_bins)}, "
                f"got {spectrum.shape}"
            )
        power = spectrum.real ** 2 + spectrum.imag ** 2

        self._frames += 1
        self._power_mean += (float(power.mean()) - self._power_mean) / self._frames
        floor = self.noise_floor()

        # Every source's smoothed spectrum is updated before any leakage term reads it.
        self.smoothed = noise_mod.smooth_spectrum_update(self.smoothed, power, cfg.alpha_s)
        leakage = noise_mod.leakage_estimates(self.smoothed, cfg.eta)
        self.mcra = noise_mod.mcra_update(self.mcra, power, self.mcra_config)
        self.noise = noise_mod.total_noise(self.mcra.noise, leakage)

        previous = self.gains
        first = previous.frame_count == 0
        gamma = a_posteriori_snr(power, self.noise, floor)
        xi = a_priori_snr(
            None if first else previous.g_h1,
            None if first else previous.gamma,
            gamma,
            cfg.alpha_p,
        )
        upsilon = gamma * xi / (xi + 1.0)
        g_h1 = gain_h1(xi, gamma, cfg.alpha, cfg.g_max)

        reference = self.noise.stationary if cfg.speech_absence_noise == "stationary" else self.noise.total
        absence = a_priori_speech_absence(
            self.smoothed.power, reference, cfg, previous.frame_speech, floor
        )
        q = np.clip(absence.q, cfg.q_min, cfg.q_max)
        p = speech_presence_probability(xi, upsilon, q)
        gain = np.clip(final_gain(p, g_h1, cfg.g_min, cfg.alpha), 0.0, cfg.g_max)

        self.gains = GainState(
            xi=xi,
            gamma=gamma,
            upsilon=upsilon,
            g_h1=g_h1,
            p=p,
            q=q,
            gain=gain,
            frame_speech=absence.frame_speech,
            frame_count=previous.frame_count + 1,
        )
        return FilterOutput(
            spectrum=apply_gain(spectrum, gain),
            gain=gain,
            noise=self.noise,
            p=p,
            q=q,
        )
