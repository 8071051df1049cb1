"""
WAV Exporter - Write separated signals to disk.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Optional, Union
from dataclasses import dataclass
import logging

import numpy as np
import soundfile as sf

from multisource_separator.exceptions import AudioIOError, ConfigError

logger = logging.getLogger(__name__)

SUBTYPES = ("PCM_16", "FLOAT")


@dataclass
class WavExportOptions:
    """Options for WAV export."""

    subtype: str = "FLOAT"  # "PCM_16" or "FLOAT" (32-bit)

    def __post_init__(self):
        self.subtype = self.subtype.upper()
        if self.subtype not in SUBTYPES:
            raise ConfigError(f"Unsupported WAV subtype '{self.subtype}', expected one of {SUBTYPES}")


class WavExporter:
    """
    Export signals to RIFF WAV files with soundfile.

    Signals are (channels, samples) or 1-D arrays.
    """

    def __init__(self, options: Optional[WavExportOptions] = None):
        """
        Initialize WAV exporter.

        Args:
            options: Export options, or None for defaults
        """
        self.options = options or WavExportOptions()

    def _prepare(self, signal: np.ndarray, output_path: Path) -> np.ndarray:
        data = np.asarray(signal, dtype=np.float64)
        if self.options.subtype == "PCM_16":
            clipped = int(np.count_nonzero(np.abs(data) > 1.0))
            if clipped:
                logger.warning(f"Clipping {clipped} samples while writing {output_path}")
                data = np.clip(data, -1.0, 1.0)
        return data

    def export(
        self,
        signal: np.ndarray,
        sample_rate: int,
        output_path: Union[str, Path],
    ) -> Path:
        """
        Write one (possibly multichannel) signal.

        Args:
            signal: (channels, samples) or (samples,)
            sample_rate: Hz
            output_path: Output file path (.wav)

        Returns:
            Path to created WAV file

        Raises:
            AudioIOError: If the file cannot be written
        """
        output_path = Path(output_path)
        if output_path.suffix.lower() != ".wav":
            output_path = output_path.with_suffix(".wav")
        output_path.parent.mkdir(parents=True, exist_ok=True)

        data = self._prepare(signal, output_path)
        frames = data.T if data.ndim == 2 else data
        try:
            sf.write(str(output_path), frames, int(sample_rate), subtype=self.options.subtype)
        except (RuntimeError, OSError) as e:
            raise AudioIOError(f"Could not write {output_path}: {e}") from e

        logger.info(f"Exported WAV to: {output_path}")
        return output_path

    def export_sources(
        self,
        signals: np.ndarray,
        sample_rate: int,
        output_dir: Union[str, Path],
    ) -> List[Path]:
        """
        Write one mono file per row of signals, named source_<n>.wav (1-based).

        Samples are written as given so the files stay level-aligned with the
        references.
        """
        output_dir = Path(output_dir)
        signals = np.atleast_2d(signals)
        paths = []
        for m, row in enumerate(signals):
            paths.append(self.export(row, sample_rate, output_dir / f"source_{m + 1}.wav"))
        return paths

