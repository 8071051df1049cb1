"""
Frame-based analysis and synthesis.

Frame l covers samples [l*hop, l*hop + frame_len). The forward DFT is
unscaled and the inverse carries the 1/frame_len factor, so for one frame

    sum(|x_w|^2) = (|X_0|^2 + 2*sum(|X_k|^2, 0<k<K-1) + |X_{K-1}|^2) / frame_len

with K = frame_len/2 + 1 bins.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Sequence, Tuple

import numpy as np
from scipy.signal import get_window

from multisource_separator.config import FrameConfig


@dataclass
class SpectralFrame:
    """
    One analysis frame for every channel.

    Attributes:
        index: Frame index l
        bins: Complex array of shape (channels, frame_len // 2 + 1)
    """
    index: int
    bins: np.ndarray

    @property
    def num_channels(self) -> int:
        return self.bins.shape[0]

    @property
    def num_bins(self) -> int:
        return self.bins.shape[1]

    def power(self) -> np.ndarray:
        """|bins|^2 per channel and bin."""
        return self.bins.real ** 2 + self.bins.imag ** 2


@lru_cache(maxsize=16)
def _windows(window: str, frame_len: int) -> Tuple[np.ndarray, np.ndarray]:
    if window == "sqrt_hann":
        w = np.sqrt(get_window("hann", frame_len, fftbins=True))
        return w, w
    if window == "hann":
        # Hann analysis with rectangular synthesis is COLA at 50% overlap.
        return get_window("hann", frame_len, fftbins=True), np.ones(frame_len)
    if window == "rectangular":
        return np.ones(frame_len), np.ones(frame_len)
    raise ValueError(f"Unknown window: {window}")


def analysis_window(cfg: FrameConfig) -> np.ndarray:
    return _windows(cfg.window, cfg.frame_len)[0]


def synthesis_window(cfg: FrameConfig) -> np.ndarray:
    return _windows(cfg.window, cfg.frame_len)[1]


def cola_gain(cfg: FrameConfig) -> float:
    """
    Constant value of the overlap-added analysis*synthesis window product.

    Raises:
        ValueError: If the window pair is not COLA at cfg.hop
    """
    product = analysis_window(cfg) * synthesis_window(cfg)
    folded = product.reshape(-1, cfg.hop).sum(axis=0)
    gain = float(folded.mean())
    ripple = float(np.max(np.abs(folded - gain))) / gain
    if ripple > 1e-10:
        raise ValueError(
            f"Window '{cfg.window}' is not COLA at hop {cfg.hop} (ripple {ripple:.2e})"
        )
    return gain


def num_frames(num_samples: int, cfg: FrameConfig) -> int:
    if num_samples < cfg.frame_len:
        return 0
    return 1 + (num_samples - cfg.frame_len) // cfg.hop


def analyze(signal: np.ndarray, cfg: FrameConfig) -> List[SpectralFrame]:
    """
    Split a signal into windowed frames and transform them.

    Args:
        signal: Real samples, shape (samples,) or (channels, samples)
        cfg: Frame configuration

    Returns:
        One SpectralFrame per complete frame; bins have shape (channels, K)

    Raises:
        ValueError: If the signal is shorter than one frame
    """
    return frames_from_array(analyze_array(signal, cfg))


def analyze_array(signal: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Like analyze(), but returns one complex array of shape (frames, channels, K)."""
    x = np.asarray(signal, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2:
        raise ValueError(f"Signal must be 1-D or (channels, samples), got shape {x.shape}")
    if x.shape[1] < cfg.frame_len:
        raise ValueError(
            f"Signal of {x.shape[1]} samples is shorter than one frame ({cfg.frame_len})"
        )

    count = num_frames(x.shape[1], cfg)
    # (channels, frames, frame_len) view over the signal
    segments = np.lib.stride_tricks.sliding_window_view(x, cfg.frame_len, axis=1)[
        :, :: cfg.hop
    ][:, :count]
    spectra = np.fft.rfft(segments * analysis_window(cfg), axis=-1)
    spectra = np.ascontiguousarray(spectra.transpose(1, 0, 2))
    # Real input: DC and Nyquist are real up to rounding; make it exact.
    spectra[..., 0] = spectra[..., 0].real
    spectra[..., -1] = spectra[..., -1].real
    return spectra


def frames_from_array(spectra: np.ndarray) -> List[SpectralFrame]:
    return [SpectralFrame(index=l, bins=spectra[l]) for l in range(spectra.shape[0])]


def frames_to_array(frames: Sequence[SpectralFrame], cfg: FrameConfig) -> np.ndarray:
    """
    Stack frames into an array of shape (frames, channels, K).

    Raises:
        ValueError: If frames disagree in shape or do not match cfg
    """
    if not frames:
        return np.zeros((0, 1, cfg.num_bins), dtype=np.complex128)
    shape = frames[0].bins.shape
    for frame in frames:
        if frame.bins.ndim != 2 or frame.bins.shape != shape:
            raise ValueError(
                f"Inconsistent frame sizes: frame {frame.index} has shape "
                f"{frame.bins.shape}, expected {shape}"
            )
    if shape[1] != cfg.num_bins:
        raise ValueError(f"Frames have {shape[1]} bins, config expects {cfg.num_bins}")
    return np.stack([frame.bins for frame in frames])


def synthesize(frames: Sequence[SpectralFrame], cfg: FrameConfig) -> np.ndarray:
    """
    Inverse-transform frames and overlap-add them.

    Args:
        frames: Frames sharing one FrameConfig
        cfg: Frame configuration

    Returns:
        Array of shape (channels, (num_frames - 1) * hop + frame_len), or an
        empty 1-D array for an empty frame sequence. Single-channel input is
        returned 1-D.
    """
    if len(frames) == 0:
        return np.zeros(0)
    out = synthesize_array(frames_to_array(frames, cfg), cfg)
    return out[0] if out.shape[0] == 1 else out


def synthesize_array(spectra: np.ndarray, cfg: FrameConfig) -> np.ndarray:
    """Overlap-add synthesis from an array of shape (frames, channels, K)."""
    count, channels, bins = spectra.shape
    if bins != cfg.num_bins:
        raise ValueError(f"Spectra have {bins} bins, config expects {cfg.num_bins}")
    length = (count - 1) * cfg.hop + cfg.frame_len if count else 0
    out = np.zeros((channels, length))
    if count == 0:
        return out

    segments = np.fft.irfft(spectra, n=cfg.frame_len, axis=-1)
    segments *= synthesis_window(cfg) / cola_gain(cfg)
    for l in range(count):
        start = l * cfg.hop
        out[:, start:start + cfg.frame_len] += segments[l]
    return out


def spectrum_energy(bins: np.ndarray, frame_len: int) -> np.ndarray:
    """Time-domain energy of a frame implied by its one-sided spectrum (last axis)."""
    power = np.abs(bins) ** 2
    total = power[..., 0] + power[..., -1] + 2.0 * power[..., 1:-1].sum(axis=-1)
    return total / frame_len


def bin_frequencies(cfg: FrameConfig) -> np.ndarray:
    return np.fft.rfftfreq(cfg.frame_len, d=1.0 / cfg.sample_rate)
