"""
Core module for LeakFilter.

Contains the signal-processing chain: framing, special functions, linear
separation, noise estimation, the post-filter, evaluation metrics and the
pipeline that composes them.
"""

from multisource_separator.core.stft import SpectralFrame, analyze, synthesize
from multisource_separator.core.lss import (
    ArrayScene,
    SeparationMatrix,
    SeparatorKind,
    build_separation_matrix,
    pseudo_inverse,
    separate,
)
from multisource_separator.core.postfilter import LeakagePostFilter
from multisource_separator.core.metrics import MetricReport, lsd, segsnr
from multisource_separator.core.pipeline import (
    PipelineState,
    SeparationPipeline,
    SeparationResult,
    process_frame,
    run,
)

__all__ = [
    "SpectralFrame",
    "analyze",
    "synthesize",
    "ArrayScene",
    "SeparationMatrix",
    "SeparatorKind",
    "build_separation_matrix",
    "pseudo_inverse",
    "separate",
    "LeakagePostFilter",
    "MetricReport",
    "lsd",
    "segsnr",
    "PipelineState",
    "SeparationPipeline",
    "SeparationResult",
    "process_frame",
    "run",
]
