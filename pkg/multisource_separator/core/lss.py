"""
Linear source separation.

Builds the estimated mixing matrix of a static far-field scene (unity
microphone gains, phases from the source directions) and separates the
microphone spectra with its pseudo-inverse, bin by bin. Nothing here is
iterative: the matrices are computed once per scene.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple
import logging

import numpy as np

from multisource_separator.config import FrameConfig, SeparationConfig
from multisource_separator.core.stft import SpectralFrame, bin_frequencies

logger = logging.getLogger(__name__)

SPEED_OF_SOUND = 343.0


@dataclass
class ArrayScene:
    """
    Static array geometry and source directions.

    Attributes:
        mic_positions: (N, 3) microphone positions in meters
        source_directions: (M, 3) unit vectors pointing from the array to each source
        speed_of_sound: m/s
        sample_rate: Hz
        labels: Optional source names used in reports
    """
    mic_positions: np.ndarray
    source_directions: np.ndarray
    speed_of_sound: float = SPEED_OF_SOUND
    sample_rate: int = 16000
    labels: List[str] = field(default_factory=list)

    def __post_init__(self):
        self.mic_positions = np.atleast_2d(np.asarray(self.mic_positions, dtype=np.float64))
        self.source_directions = np.atleast_2d(
            np.asarray(self.source_directions, dtype=np.float64)
        )
        if self.mic_positions.shape[1] != 3 or self.source_directions.shape[1] != 3:
            raise ValueError("mic_positions and source_directions must be 3-vectors")
        if self.num_mics < 1 or self.num_sources < 1:
            raise ValueError("A scene needs at least one microphone and one source")
        if self.num_sources > self.num_mics:
            raise ValueError(
                f"{self.num_sources} sources cannot be separated with {self.num_mics} microphones"
            )
        norms = np.linalg.norm(self.source_directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ValueError(f"Source directions must be unit vectors, got norms {norms}")
        if self.speed_of_sound <= 0 or self.sample_rate <= 0:
            raise ValueError("speed_of_sound and sample_rate must be positive")
        if not self.labels:
            self.labels = [f"source {m + 1}" for m in range(self.num_sources)]
        elif len(self.labels) != self.num_sources:
            raise ValueError("labels must name every source")

    @property
    def num_mics(self) -> int:
        return self.mic_positions.shape[0]

    @property
    def num_sources(self) -> int:
        return self.source_directions.shape[0]

    @property
    def centroid(self) -> np.ndarray:
        return self.mic_positions.mean(axis=0)

    def delays(self) -> np.ndarray:
        """
        Far-field delays tau[n, m] in seconds, relative to the array centroid.

        A positive delay means the wavefront reaches mic n after the centroid.
        """
        relative = self.mic_positions - self.centroid
        return -(relative @ self.source_directions.T) / self.speed_of_sound


@dataclass
class MixingMatrix:
    """Per-bin complex N x M steering matrices."""
    matrices: np.ndarray  # (K, N, M)
    frequencies: np.ndarray  # (K,) Hz

    def __getitem__(self, k: int) -> np.ndarray:
        return self.matrices[k]


@dataclass
class SeparationMatrix:
    """
    Per-bin complex M x N separation matrices.

    Attributes:
        matrices: (K, M, N)
        regularized: (K,) True where the ridge fallback was used
        condition: (K,) condition number of A^H A (nan when not applicable)
    """
    matrices: np.ndarray
    regularized: np.ndarray
    condition: np.ndarray

    @property
    def num_sources(self) -> int:
        return self.matrices.shape[1]

    @property
    def num_mics(self) -> int:
        return self.matrices.shape[2]

    def white_noise_gain(self) -> np.ndarray:
        """
        Output power per source and bin for spatially white unit-variance noise.

        Returns:
            (K, M) array, |w_m(k)|^2 summed over the microphones
        """
        return np.sum(np.abs(self.matrices) ** 2, axis=2)

    def max_noise_gain_db(self) -> float:
        """Largest white-noise gain over bins and sources, in dB."""
        peak = float(self.white_noise_gain().max()) if self.matrices.size else 0.0
        return 10.0 * np.log10(peak) if peak > 0 else float("-inf")


class SeparatorKind(Enum):
    """Available linear separators."""
    PSEUDO_INVERSE = "pseudo_inverse"
    DELAY_AND_SUM = "delay_and_sum"


def steering_matrix(scene: ArrayScene, bin_freq: float) -> np.ndarray:
    """
    Unit-gain steering matrix for one frequency.

    Args:
        scene: Array geometry and source directions
        bin_freq: Frequency in Hz, within [0, sample_rate / 2]

    Returns:
        Complex (N, M) matrix, a[n, m] = exp(-j 2 pi f tau[n, m])
    """
    if not 0.0 <= bin_freq <= scene.sample_rate / 2.0:
        raise ValueError(f"bin_freq {bin_freq} Hz outside [0, {scene.sample_rate / 2}]")
    return np.exp(-2j * np.pi * bin_freq * scene.delays())


def mixing_matrices(scene: ArrayScene, cfg: FrameConfig) -> MixingMatrix:
    """Steering matrices for every analysis bin."""
    freqs = bin_frequencies(cfg)
    tau = scene.delays()
    return MixingMatrix(
        matrices=np.exp(-2j * np.pi * freqs[:, None, None] * tau[None, :, :]),
        frequencies=freqs,
    )


def pseudo_inverse(
    A: np.ndarray,
    cond_limit: float = 1e12,
    ridge: float = 1e-9,
) -> Tuple[np.ndarray, bool, float]:
    """
    Moore-Penrose pseudo-inverse of a tall (or square) matrix.

    Computed from the SVD A = U S V^H as V S^-1 U^H, which equals
    (A^H A)^-1 A^H without forming A^H A. When A^H A is ill-conditioned, the
    ridge solution (A^H A + delta I)^-1 A^H = V S (S^2 + delta)^-1 U^H with
    delta = ridge * trace(A^H A) / M is used instead.

    Args:
        A: Complex (N, M) matrix with M <= N
        cond_limit: Condition number of A^H A that triggers the fallback
        ridge: Relative regularization

    Returns:
        (A+ of shape (M, N), regularized flag, condition number of A^H A)
    """
    A = np.asarray(A, dtype=np.complex128)
    if A.ndim != 2:
        raise ValueError(f"pseudo_inverse expects a matrix, got shape {A.shape}")
    if A.shape[1] > A.shape[0]:
        raise ValueError(f"pseudo_inverse expects M <= N, got shape {A.shape}")
    U, s, Vh = np.linalg.svd(A, full_matrices=False)
    power = s ** 2
    with np.errstate(over="ignore"):
        cond = float(power[0] / power[-1]) if power[-1] > 0 else float("inf")
    regularized = not np.isfinite(cond) or cond > cond_limit
    if regularized:
        delta = max(ridge * float(power.sum()) / A.shape[1], np.finfo(np.float64).tiny)
        inverse = s / (power + delta)
    else:
        inverse = 1.0 / s
    return (Vh.conj().T * inverse) @ U.conj().T, regularized, cond


def build_separation_matrix(
    scene: ArrayScene,
    frame_cfg: FrameConfig,
    cfg: Optional[SeparationConfig] = None,
) -> SeparationMatrix:
    """
    Compute W(k) for every bin with the configured separator.

    Args:
        scene: Array geometry and source directions
        frame_cfg: Frame configuration (defines the bins)
        cfg: Separation settings, defaults when None

    Returns:
        SeparationMatrix of shape (K, M, N)
    """
    cfg = cfg or SeparationConfig()
    mixing = mixing_matrices(scene, frame_cfg)
    kind = SeparatorKind(cfg.method)
    bins = mixing.matrices.shape[0]

    if kind == SeparatorKind.DELAY_AND_SUM:
        weights = mixing.matrices.conj().transpose(0, 2, 1) / scene.num_mics
        return SeparationMatrix(
            matrices=weights,
            regularized=np.zeros(bins, dtype=bool),
            condition=np.full(bins, np.nan),
        )

    weights = np.empty((bins, scene.num_sources, scene.num_mics), dtype=np.complex128)
    regularized = np.zeros(bins, dtype=bool)
    condition = np.empty(bins)
    for k in range(bins):
        weights[k], regularized[k], condition[k] = pseudo_inverse(
            mixing.matrices[k], cfg.cond_limit, cfg.ridge
        )

    if regularized.any():
        logger.warning(
            f"Separation matrix regularized in {int(regularized.sum())} of {bins} bins "
            f"(lowest: {mixing.frequencies[regularized].min():.1f} Hz)"
        )
    separation = SeparationMatrix(matrices=weights, regularized=regularized, condition=condition)
    noisy = noise_gain_bins(separation, cfg.noise_gain_limit_db)
    if noisy.any():
        worst = int(np.argmax(separation.white_noise_gain().max(axis=1)))
        logger.warning(
            f"White-noise gain above {cfg.noise_gain_limit_db:g} dB in {int(noisy.sum())} of {bins} bins "
            f"(max {separation.max_noise_gain_db():.1f} dB at {mixing.frequencies[worst]:.1f} Hz)"
        )
    logger.debug(
        f"Built {kind.value} separation for {scene.num_sources} sources, "
        f"{scene.num_mics} mics, median cond {np.nanmedian(condition):.3g}"
    )
    return separation


def noise_gain_bins(separation: SeparationMatrix, limit_db: float) -> np.ndarray:
    """(K,) True where some source's white-noise gain exceeds limit_db."""
    limit = 10.0 ** (limit_db / 10.0)
    return np.any(separation.white_noise_gain() > limit, axis=1)


def separate_bins(Z: np.ndarray, W: SeparationMatrix) -> np.ndarray:
    """
    Apply W(k) to microphone spectra.

    Args:
        Z: Complex array (..., N, K) of microphone spectra
        W: Separation matrix with K bins

    Returns:
        Complex array (..., M, K)
    """
    Z = np.asarray(Z)
    if Z.shape[-2] != W.num_mics or Z.shape[-1] != W.matrices.shape[0]:
        raise ValueError(
            f"Spectra of shape {Z.shape} do not match separation matrix "
            f"({W.matrices.shape[0]} bins, {W.num_mics} mics)"
        )
    return np.einsum("kmn,...nk->...mk", W.matrices, Z)


def separate(frames: Sequence[SpectralFrame], W: SeparationMatrix) -> List[SpectralFrame]:
    """
    Separate a sequence of N-channel frames into M-channel frames.

    Raises:
        ValueError: If a frame's channel or bin count does not match W
    """
    return [SpectralFrame(index=f.index, bins=separate_bins(f.bins, W)) for f in frames]
