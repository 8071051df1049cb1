"""
Utility modules for LeakFilter.
"""

from multisource_separator.utils.audio_io import (
    check_sample_rate,
    read_mono,
    read_wav,
)

__all__ = [
    "check_sample_rate",
    "read_mono",
    "read_wav",
]
