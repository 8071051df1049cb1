"""
Evaluation metrics: log spectral distortion and segmental SNR.

Both compare an estimate against a time-aligned clean reference. The report
types mirror the stage-by-source comparison table: microphone input, LSS
output, single-channel post-filter, proposed post-filter.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from multisource_separator.config import FrameConfig, MetricsConfig
from multisource_separator.core.stft import SpectralFrame, analyze_array

STAGE_NAMES = ("mic_input", "lss_output", "single_channel_postfilter", "proposed_postfilter")
STAGE_TITLES = {
    "mic_input": "Mic. input",
    "lss_output": "LSS output",
    "single_channel_postfilter": "1-ch. post-filter",
    "proposed_postfilter": "Proposed p-f",
}

Spectra = Union[Sequence[SpectralFrame], np.ndarray]


def _magnitudes(spectra: Spectra, channel: int) -> np.ndarray:
    """(frames, bins) magnitudes from frames or a (frames, bins) / (frames, channels, bins) array."""
    if isinstance(spectra, np.ndarray):
        arr = spectra
        if arr.ndim == 3:
            arr = arr[:, channel, :]
    else:
        if len(spectra) == 0:
            return np.zeros((0, 0))
        arr = np.stack([frame.bins[channel] for frame in spectra])
    if arr.ndim != 2:
        raise ValueError(f"Expected (frames, bins) spectra, got shape {arr.shape}")
    return np.abs(arr)


def default_epsilon(reference: Spectra, ratio: float = 1e-6, channel: int = 0) -> float:
    """ratio x the largest reference magnitude (smallest positive double for silence)."""
    peak = float(_magnitudes(reference, channel).max(initial=0.0))
    return max(ratio * peak, np.finfo(np.float64).tiny)


def lsd(
    reference: Spectra,
    estimate: Spectra,
    epsilon: Optional[float] = None,
    channel: int = 0,
) -> float:
    """
    Log spectral distortion in dB.

    LSD = (1/L) sum_l [ (1/K) sum_k (20 log10((|X|+eps)/(|X_hat|+eps)))^2 ]^(1/2)

    Args:
        reference: Clean spectra X
        estimate: Estimated spectra X_hat
        epsilon: Guard value; defaults to 1e-6 x max |X|
        channel: Channel to compare when frames hold several

    Raises:
        ValueError: If frame or bin counts differ
    """
    ref = _magnitudes(reference, channel)
    est = _magnitudes(estimate, channel)
    if ref.shape != est.shape:
        raise ValueError(f"Reference and estimate differ in shape: {ref.shape} vs {est.shape}")
    if ref.shape[0] == 0:
        raise ValueError("Cannot compute LSD on zero frames")
    eps = default_epsilon(reference, channel=channel) if epsilon is None else epsilon
    ratio_db = 20.0 * np.log10((ref + eps) / (est + eps))
    per_frame = np.sqrt(np.mean(np.square(ratio_db), axis=1))
    return float(np.mean(per_frame))


def segsnr(
    reference: np.ndarray,
    estimate: np.ndarray,
    frame_len: int = 256,
    clamp: Sequence[float] = (-10.0, 35.0),
    silence_ratio: float = 1e-10,
) -> float:
    """
    Segmental SNR in dB over non-overlapping frames.

    Each frame contributes 10 log10(sum x^2 / sum (x - x_hat)^2) clamped to
    [lo, hi]; frames whose reference energy is below silence_ratio times the
    mean frame energy are skipped.

    Raises:
        ValueError: If the signals differ in length
    """
    reference = np.asarray(reference, dtype=np.float64)
    estimate = np.asarray(estimate, dtype=np.float64)
    if reference.shape != estimate.shape:
        raise ValueError(
            f"Reference and estimate differ in length: {reference.shape} vs {estimate.shape}"
        )
    lo, hi = clamp
    count = reference.shape[-1] // frame_len
    if count == 0:
        raise ValueError(f"Signal shorter than one SegSNR frame ({frame_len} samples)")
    ref = reference[..., : count * frame_len].reshape(count, frame_len)
    err = ref - estimate[..., : count * frame_len].reshape(count, frame_len)

    signal_energy = np.sum(ref ** 2, axis=1)
    error_energy = np.sum(err ** 2, axis=1)
    mean_energy = signal_energy.mean()
    active = signal_energy > silence_ratio * mean_energy
    if not np.any(active):
        return float(lo)

    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = 10.0 * np.log10(signal_energy[active] / error_energy[active])
    ratio = np.where(np.isnan(ratio), hi, ratio)
    return float(np.mean(np.clip(ratio, lo, hi)))


@dataclass
class SourceMetrics:
    lsd_db: float
    segsnr_db: float


@dataclass
class StageMetrics:
    name: str
    per_source: List[SourceMetrics] = field(default_factory=list)


@dataclass
class MetricReport:
    """
    LSD / SegSNR per stage and source.

    Attributes:
        stages: One entry per processing stage, in table order
        sources: Source labels
        frames: Frame count L used for LSD
        bins: Bin count K used for LSD
        epsilon: Guard value per source
        config: Effective configuration of the run
        manifest_hash: SHA-256 of the run manifest, when produced by the CLI
    """
    stages: List[StageMetrics]
    sources: List[str]
    frames: int
    bins: int
    epsilon: List[float]
    config: Dict = field(default_factory=dict)
    manifest_hash: Optional[str] = None

    def stage(self, name: str) -> StageMetrics:
        for stage in self.stages:
            if stage.name == name:
                return stage
        raise KeyError(name)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricReport":
        """
        Rebuild a report from its JSON form.

        Raises:
            ValueError: On missing or malformed fields
        """
        try:
            stages = [
                StageMetrics(
                    name=str(s["name"]),
                    per_source=[
                        SourceMetrics(float(v["lsd_db"]), float(v["segsnr_db"]))
                        for v in s["per_source"]
                    ],
                )
                for s in data["stages"]
            ]
        except (KeyError, TypeError, ValueError) as e:
            raise ValueError(f"Malformed report: {e}") from e
        width = max((len(s.per_source) for s in stages), default=0)
        return cls(
            stages=stages,
            sources=list(data.get("sources") or [f"source {m + 1}" for m in range(width)]),
            frames=int(data.get("frames", 0)),
            bins=int(data.get("bins", 0)),
            epsilon=list(data.get("epsilon", [])),
            config=dict(data.get("config", {})),
            manifest_hash=data.get("manifest_hash"),
        )


def evaluate_stages(
    stage_signals: Dict[str, np.ndarray],
    references: np.ndarray,
    frame_cfg: FrameConfig,
    metrics_cfg: Optional[MetricsConfig] = None,
    stage_references: Optional[Dict[str, np.ndarray]] = None,
    labels: Optional[Sequence[str]] = None,
) -> MetricReport:
    """
    Score every stage against the clean references.

    Args:
        stage_signals: Stage name -> (M, samples) signals, in table order
        references: (M, samples) clean sources
        frame_cfg: Analysis settings used for LSD
        metrics_cfg: SegSNR settings
        stage_references: Optional per-stage references overriding `references`
        labels: Source names

    Returns:
        MetricReport with one StageMetrics per stage
    """
    metrics_cfg = metrics_cfg or MetricsConfig()
    references = np.atleast_2d(references)
    stage_references = stage_references or {}
    num_sources = references.shape[0]

    ref_spectra = {}
    epsilons = []
    for m in range(num_sources):
        spectra = analyze_array(references[m], frame_cfg)[:, 0, :]
        ref_spectra[m] = spectra
        epsilons.append(default_epsilon(spectra, metrics_cfg.lsd_epsilon_ratio))

    stages = []
    for name, signals in stage_signals.items():
        signals = np.atleast_2d(signals)
        refs = np.atleast_2d(stage_references.get(name, references))
        per_source = []
        for m in range(num_sources):
            if name in stage_references:
                ref_m = analyze_array(refs[m], frame_cfg)[:, 0, :]
            else:
                ref_m = ref_spectra[m]
            est_m = analyze_array(signals[m], frame_cfg)[:, 0, :]
            per_source.append(SourceMetrics(
                lsd_db=lsd(ref_m, est_m, epsilons[m]),
                segsnr_db=segsnr(
                    refs[m],
                    signals[m],
                    metrics_cfg.segment_len,
                    (metrics_cfg.segsnr_floor_db, metrics_cfg.segsnr_ceiling_db),
                    metrics_cfg.silence_ratio,
                ),
            ))
        stages.append(StageMetrics(name=name, per_source=per_source))

    frames, _, bins = analyze_array(references[0], frame_cfg).shape
    return MetricReport(
        stages=stages,
        sources=list(labels) if labels else [f"source {m + 1}" for m in range(num_sources)],
        frames=frames,
        bins=bins,
        epsilon=epsilons,
    )
