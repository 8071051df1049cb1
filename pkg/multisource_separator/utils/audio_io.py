"""
WAV reading.

Signals are handled as float64 arrays of shape (channels, samples); soundfile
returns (samples, channels), so everything read here is transposed once.
Sample rates are never converted: a mismatch is an error.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Tuple, Union
import logging

import numpy as np
import soundfile as sf

from multisource_separator.exceptions import AudioIOError

logger = logging.getLogger(__name__)


def check_sample_rate(actual: int, expected: Optional[int], path: Union[str, Path]) -> None:
    """
    Raises:
        AudioIOError: If expected is set and differs from actual
    """
    if expected is not None and actual != expected:
        raise AudioIOError(
            f"{path}: sample rate {actual} Hz does not match the expected {expected} Hz"
        )


def read_wav(
    path: Union[str, Path],
    expected_rate: Optional[int] = None,
) -> Tuple[np.ndarray, int]:
    """
    Read a WAV file.

    Args:
        path: File to read
        expected_rate: Required sample rate, or None to accept any

    Returns:
        (signal of shape (channels, samples), sample rate)

    Raises:
        AudioIOError: If the file is missing, unreadable or at the wrong rate
    """
    path = Path(path)
    if not path.exists():
        raise AudioIOError(f"Audio file not found: {path}")
    try:
        data, rate = sf.read(str(path), dtype="float64", always_2d=True)
    except (RuntimeError, OSError) as e:
        raise AudioIOError(f"Could not read {path}: {e}") from e
    check_sample_rate(rate, expected_rate, path)
    logger.debug(f"Read {path}: {data.shape[1]} channels, {data.shape[0]} samples at {rate} Hz")
    return np.ascontiguousarray(data.T), rate


def read_mono(
    path: Union[str, Path],
    expected_rate: Optional[int] = None,
) -> Tuple[np.ndarray, int]:
    """read_wav(), with multichannel files averaged down to one channel."""
    signal, rate = read_wav(path, expected_rate)
    if signal.shape[0] > 1:
        logger.debug(f"Averaging {signal.shape[0]} channels of {path} to mono")
    return signal.mean(axis=0), rate
