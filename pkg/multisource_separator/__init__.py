"""
LeakFilter - Multi-source separation with a leakage-aware post-filter

Separates the sources of a static scene recorded by a microphone array with a
linear (pseudo-inverse) separator, then suppresses residual noise and
inter-source leakage with a loudness-domain MMSE post-filter.
"""

__version__ = "1.0.0"

from multisource_separator.config import Config
from multisource_separator.core.pipeline import SeparationPipeline, run

__all__ = ["Config", "SeparationPipeline", "run", "__version__"]
