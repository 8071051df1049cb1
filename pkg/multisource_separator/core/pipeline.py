"""
Separation pipeline - Orchestrates the processing chain.

microphone signals -> STFT -> linear separation -> per-source noise
estimation -> post-filter -> inverse STFT. The frame loop is sequential
because every estimator is recursive; the separation matrices are computed
once per run for the static scene.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Tuple, Union
import logging

import numpy as np

from multisource_separator.config import Config, FrameConfig, PostfilterConfig
from multisource_separator.core.lss import (
    ArrayScene,
    SeparationMatrix,
    build_separation_matrix,
    separate_bins,
)
from multisource_separator.core.metrics import STAGE_NAMES, MetricReport, evaluate_stages
from multisource_separator.core.postfilter import LeakagePostFilter
from multisource_separator.core.stft import SpectralFrame, analyze_array, synthesize_array
from multisource_separator.exceptions import ConfigError, NumericalError

logger = logging.getLogger(__name__)

ProgressCallback = Callable[[str, int], None]


@dataclass
class FrameDiagnostics:
    """Per-source scalars of one frame (each of shape (M,))."""
    mean_gain: np.ndarray
    stationary_noise: np.ndarray
    leakage_noise: np.ndarray
    speech_presence: np.ndarray


@dataclass
class FrameOutput:
    """
    Result of process_frame().

    Attributes:
        frame: Post-filtered spectra X_hat over the M sources
        lss: Separated spectra Y before the post-filter
        baseline: Single-channel (eta = 0) post-filter output, when tracked
        diagnostics: Frame-level summaries of the proposed filter
    """
    frame: SpectralFrame
    lss: SpectralFrame
    baseline: Optional[SpectralFrame]
    diagnostics: FrameDiagnostics


@dataclass
class PipelineState:
    """
    Frame-sequential state of the whole chain.

    The proposed and baseline post-filters hold every per-source estimator
    (smoothed spectra, MCRA, gain recursion) stacked over sources, so all
    sources advance by exactly one frame per call.
    """
    frame_cfg: FrameConfig
    separation: SeparationMatrix
    postfilter: LeakagePostFilter
    baseline: Optional[LeakagePostFilter] = None
    frame_count: int = 0

    @classmethod
    def create(
        cls,
        scene: ArrayScene,
        config: Optional[Config] = None,
        track_baseline: bool = False,
    ) -> "PipelineState":
        """
        Initialize the state for a scene.

        Args:
            scene: Array geometry and source directions
            config: Full configuration, defaults when None
            track_baseline: Also run the single-channel (eta = 0) post-filter

        Raises:
            ConfigError: If the scene and frame configuration disagree on the sample rate
        """
        config = config or Config()
        if scene.sample_rate != config.frame.sample_rate:
            raise ConfigError(
                f"Scene sample rate {scene.sample_rate} Hz does not match the frame "
                f"configuration ({config.frame.sample_rate} Hz)"
            )
        separation = build_separation_matrix(scene, config.frame, config.separation)
        bins = config.frame.num_bins
        postfilter = LeakagePostFilter(scene.num_sources, bins, config.postfilter, config.mcra)
        baseline = None
        if track_baseline:
            baseline = LeakagePostFilter(
                scene.num_sources, bins, replace(config.postfilter, eta=0.0), config.mcra
            )
        return cls(
            frame_cfg=config.frame,
            separation=separation,
            postfilter=postfilter,
            baseline=baseline,
        )

    @property
    def num_sources(self) -> int:
        return self.separation.num_sources

    @property
    def num_mics(self) -> int:
        return self.separation.num_mics


def process_frame(state: PipelineState, mic_frame: SpectralFrame) -> FrameOutput:
    """
    Run one frame through separation and post-filtering.

    Args:
        state: Pipeline state, advanced in place by one frame
        mic_frame: Spectra of the N microphones for the current frame

    Returns:
        FrameOutput with the separated and filtered frames

    Raises:
        ValueError: If the frame does not have N channels and K bins
    """
    bins = np.asarray(mic_frame.bins)
    if bins.shape != (state.num_mics, state.frame_cfg.num_bins):
        raise ValueError(
            f"Microphone frame has shape {bins.shape}, expected "
            f"{(state.num_mics, state.frame_cfg.num_bins)}"
        )

    separated = separate_bins(bins, state.separation)
    filtered = state.postfilter.process(separated)
    baseline = None
    if state.baseline is not None:
        baseline = SpectralFrame(
            index=mic_frame.index, bins=state.baseline.process(separated).spectrum
        )
    state.frame_count += 1

    noise = filtered.noise
    return FrameOutput(
        frame=SpectralFrame(index=mic_frame.index, bins=filtered.spectrum),
        lss=SpectralFrame(index=mic_frame.index, bins=separated),
        baseline=baseline,
        diagnostics=FrameDiagnostics(
            mean_gain=filtered.gain.mean(axis=-1),
            stationary_noise=noise.stationary.mean(axis=-1),
            leakage_noise=noise.leakage.mean(axis=-1),
            speech_presence=filtered.p.mean(axis=-1),
        ),
    )


@dataclass
class SeparationResult:
    """
    Result of a full separation run.

    All signals are time-aligned with the input and have its length.
    """
    outputs: np.ndarray  # (M, samples) proposed post-filter
    lss_output: Optional[np.ndarray] = None
    single_channel_output: Optional[np.ndarray] = None
    mic_average: Optional[np.ndarray] = None
    report: Optional[MetricReport] = None
    diagnostics: Dict[str, np.ndarray] = field(default_factory=dict)
    regularized_bins: int = 0
    max_noise_gain_db: float = 0.0  # worst |w_m|^2 of the separation matrix
    frames: int = 0
    processing_time: float = 0.0
    warnings: List[str] = field(default_factory=list)


def padding(num_samples: int, cfg: FrameConfig) -> Tuple[int, int]:
    """
    Zeros added before and after the signal.

    The front pad of frame_len - hop samples and the tail pad put every input
    sample under a complete set of overlapping frames, so overlap-add
    reconstructs it exactly and trimming the front pad removes the latency.
    """
    front = cfg.frame_len - cfg.hop
    total = -(-(num_samples + 2 * front) // cfg.hop) * cfg.hop
    total = max(total, cfg.frame_len)
    return front, total - front - num_samples


class SeparationPipeline:
    """
    Full-file driver around process_frame().

    Workflow:
    1. Pad and analyze the microphone signals
    2. Separate and post-filter frame by frame
    3. Synthesize and trim every stage
    4. Score the stages when references are supplied
    """

    def __init__(
        self,
        scene: ArrayScene,
        config: Optional[Union[Config, PostfilterConfig]] = None,
        diagnostics: bool = False,
        progress_callback: Optional[ProgressCallback] = None,
    ):
        """
        Initialize the pipeline.

        Args:
            scene: Array geometry and source directions
            config: Full configuration, or post-filter settings on top of the defaults
            diagnostics: Keep the LSS and single-channel taps in the result
            progress_callback: Optional callback for progress updates
                              Signature: (message: str, percent: int) -> None
        """
        if isinstance(config, PostfilterConfig):
            config = Config(postfilter=config)
        self.scene = scene
        self.config = config or Config()
        self.diagnostics = diagnostics
        self.progress_callback = progress_callback

    def _report_progress(self, message: str, percent: int) -> None:
        """Report progress to callback if available."""
        if self.progress_callback:
            self.progress_callback(message, percent)
        logger.info(f"Separation progress: {percent}% - {message}")

    def run(
        self,
        mixture: np.ndarray,
        references: Optional[np.ndarray] = None,
        mic_references: Optional[np.ndarray] = None,
    ) -> SeparationResult:
        """
        Separate a complete N-channel recording.

        Args:
            mixture: (N, samples) microphone signals
            references: Optional (M, samples) clean sources at the array centroid
            mic_references: Optional (M, samples) clean sources as heard at the
                            microphones (channel average); used for the
                            microphone-input stage instead of `references`

        Returns:
            SeparationResult with the enhanced signals and, with references, a MetricReport

        Raises:
            ConfigError: On inconsistent shapes or settings
            NumericalError: If any stage produces non-finite values
        """
        start_time = time.time()
        cfg = self.config.frame
        mixture = np.atleast_2d(np.asarray(mixture, dtype=np.float64))
        if mixture.shape[0] != self.scene.num_mics:
            raise ConfigError(
                f"Mixture has {mixture.shape[0]} channels, scene has {self.scene.num_mics} microphones"
            )
        if not np.all(np.isfinite(mixture)):
            raise NumericalError("Mixture contains non-finite samples")
        references = self._check_references(references, mixture.shape[1], "references")
        mic_references = self._check_references(
            mic_references, mixture.shape[1], "mic_references"
        )

        num_samples = mixture.shape[1]
        num_sources = self.scene.num_sources
        track_baseline = self.diagnostics or references is not None

        self._report_progress("Building separation matrices...", 0)
        state = PipelineState.create(self.scene, self.config, track_baseline)
        regularized = int(state.separation.regularized.sum())
        noise_gain_db = state.separation.max_noise_gain_db()

        if num_samples == 0:
            empty = np.zeros((num_sources, 0))
            return SeparationResult(
                outputs=empty,
                lss_output=empty.copy() if self.diagnostics else None,
                single_channel_output=empty.copy() if self.diagnostics else None,
                regularized_bins=regularized,
                max_noise_gain_db=noise_gain_db,
                processing_time=time.time() - start_time,
                warnings=["Empty input"],
            )

        front, back = padding(num_samples, cfg)
        padded = np.pad(mixture, ((0, 0), (front, back)))
        spectra = analyze_array(padded, cfg)
        count = spectra.shape[0]

        proposed = np.empty((count, num_sources, cfg.num_bins), dtype=np.complex128)
        lss = np.empty_like(proposed)
        baseline = np.empty_like(proposed) if track_baseline else None
        taps = {
            name: np.empty((count, num_sources))
            for name in ("mean_gain", "stationary_noise", "leakage_noise", "speech_presence")
        }

        self._report_progress(f"Processing {count} frames...", 5)
        step = max(count // 10, 1)
        for l in range(count):
            out = process_frame(state, SpectralFrame(index=l, bins=spectra[l]))
            proposed[l] = out.frame.bins
            lss[l] = out.lss.bins
            if baseline is not None:
                baseline[l] = out.baseline.bins
            for name in taps:
                taps[name][l] = getattr(out.diagnostics, name)
            if (l + 1) % step == 0 and l + 1 < count:
                self._report_progress(f"Frame {l + 1} of {count}", 5 + int(85 * (l + 1) / count))

        self._report_progress("Synthesizing outputs...", 90)
        trim = slice(front, front + num_samples)

        def render(stage: np.ndarray, name: str) -> np.ndarray:
            signal = synthesize_array(stage, cfg)[:, trim]
            if not np.all(np.isfinite(signal)):
                raise NumericalError(f"Non-finite samples in the {name} stage")
            return signal

        result = SeparationResult(
            outputs=render(proposed, "proposed post-filter"),
            regularized_bins=regularized,
            max_noise_gain_db=noise_gain_db,
            frames=count,
        )
        lss_signal = render(lss, "LSS output")
        baseline_signal = render(baseline, "single-channel post-filter") if baseline is not None else None
        mic_average = mixture.mean(axis=0)
        for name, values in taps.items():
            if not np.all(np.isfinite(values)):
                raise NumericalError(f"Non-finite {name} in the post-filter state")
        if regularized:
            result.warnings.append(f"{regularized} bins used the regularized pseudo-inverse")
        if noise_gain_db > self.config.separation.noise_gain_limit_db:
            result.warnings.append(
                f"White-noise gain of the separation reaches {noise_gain_db:.1f} dB; "
                f"background noise is amplified"
            )

        if self.diagnostics:
            result.lss_output = lss_signal
            result.single_channel_output = baseline_signal
            result.mic_average = mic_average
            result.diagnostics = taps

        if references is not None:
            self._report_progress("Computing metrics...", 95)
            result.report = self._evaluate(
                mic_average, lss_signal, baseline_signal, result.outputs,
                references, mic_references, result.warnings,
            )

        result.processing_time = time.time() - start_time
        self._report_progress("Completed!", 100)
        logger.info(
            f"Separated {num_sources} sources from {self.scene.num_mics} mics: "
            f"{count} frames in {result.processing_time:.2f}s"
        )
        return result

    def _check_references(
        self, references: Optional[np.ndarray], num_samples: int, name: str
    ) -> Optional[np.ndarray]:
        if references is None:
            return None
        references = np.atleast_2d(np.asarray(references, dtype=np.float64))
        expected = (self.scene.num_sources, num_samples)
        if references.shape != expected:
            raise ConfigError(f"{name} have shape {references.shape}, expected {expected}")
        return references

    def _evaluate(
        self,
        mic_average: np.ndarray,
        lss_signal: np.ndarray,
        baseline_signal: np.ndarray,
        proposed_signal: np.ndarray,
        references: np.ndarray,
        mic_references: Optional[np.ndarray],
        warnings: List[str],
    ) -> Optional[MetricReport]:
        cfg = self.config
        shortest = max(cfg.frame.frame_len, cfg.metrics.segment_len)
        if references.shape[1] < shortest:
            message = f"Signals shorter than {shortest} samples; metrics skipped"
            logger.warning(message)
            warnings.append(message)
            return None

        num_sources = self.scene.num_sources
        signals = dict(zip(STAGE_NAMES, (
            np.tile(mic_average, (num_sources, 1)),
            lss_signal,
            baseline_signal,
            proposed_signal,
        )))
        stage_references = {}
        if mic_references is not None:
            stage_references["mic_input"] = mic_references
        report = evaluate_stages(
            signals,
            references,
            cfg.frame,
            cfg.metrics,
            stage_references=stage_references,
            labels=self.scene.labels,
        )
        report.config = cfg.to_dict()
        return report


def run(
    mixture: np.ndarray,
    scene: ArrayScene,
    config: Optional[Union[Config, PostfilterConfig]] = None,
    references: Optional[np.ndarray] = None,
    mic_references: Optional[np.ndarray] = None,
    diagnostics: bool = False,
    progress_callback: Optional[ProgressCallback] = None,
) -> SeparationResult:
    """Convenience wrapper around SeparationPipeline.run()."""
    pipeline = SeparationPipeline(scene, config, diagnostics, progress_callback)
    return pipeline.run(mixture, references, mic_references)
