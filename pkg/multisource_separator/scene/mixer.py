"""
Synthetic scene mixer.

Renders each source through the far-field delay model of the array, sums the
source images, adds background noise at a level relative to the mixed
speech, and keeps the clean references needed for evaluation. Everything
random is drawn from generators spawned from the scene seed, so a scene file
always renders to the same samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, Union
import logging

import numpy as np
from scipy.fft import irfft, next_fast_len, rfft

from multisource_separator.config import MetricsConfig
from multisource_separator.core.lss import ArrayScene
from multisource_separator.core.metrics import segsnr
from multisource_separator.exceptions import ConfigError
from multisource_separator.scene.geometry import parse_direction, read_scene_file, scene_from_dict
from multisource_separator.scene.surrogates import (
    SurrogateParams,
    pink_noise,
    speech_surrogate,
    white_noise,
)
from multisource_separator.utils.audio_io import read_mono

logger = logging.getLogger(__name__)

SOURCE_KINDS = ("surrogate", "wav", "silence")
NOISE_TYPES = ("white", "pink", "wav", "none")


@dataclass
class SourceSpec:
    """One source: its signal, level and (nominal) direction."""
    direction: np.ndarray
    kind: str = "surrogate"  # "surrogate", "wav" or "silence"
    path: Optional[str] = None
    surrogate: SurrogateParams = field(default_factory=SurrogateParams)
    level_db: float = 0.0
    label: str = ""

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigError(f"Unknown source kind '{self.kind}', expected one of {SOURCE_KINDS}")
        if self.kind == "wav" and not self.path:
            raise ConfigError(f"Source '{self.label}' needs a WAV path")
        if not np.isfinite(self.level_db):
            raise ConfigError(f"Source '{self.label}' has a non-finite level")

    @classmethod
    def from_dict(cls, entry: Mapping[str, Any], index: int, base_dir: Optional[Path] = None) -> "SourceSpec":
        """
        Parse a scene "sources" entry: {"wav": path} | {"surrogate": {...}} |
        {"silence": true}, plus direction or azimuth/elevation, label, level_db.
        """
        label = str(entry.get("label") or f"source {index + 1}")
        kwargs: Dict[str, Any] = {
            "direction": parse_direction(entry),
            "level_db": float(entry.get("level_db", 0.0)),
            "label": label,
        }
        if "wav" in entry:
            path = Path(entry["wav"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            kwargs.update(kind="wav", path=str(path))
        elif entry.get("silence"):
            kwargs.update(kind="silence")
        else:
            kwargs.update(surrogate=SurrogateParams.from_dict(entry.get("surrogate") or {}))
        return cls(**kwargs)


@dataclass
class NoiseSpec:
    """Background noise, level in dB relative to the mixed speech power."""
    kind: str = "white"
    level_db: float = -20.0
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in NOISE_TYPES:
            raise ConfigError(f"Unknown noise type '{self.kind}', expected one of {NOISE_TYPES}")
        if self.kind == "wav" and not self.path:
            raise ConfigError("Recorded noise needs a WAV path")
        if not np.isfinite(self.level_db):
            raise ConfigError("Noise level must be finite")

    @classmethod
    def from_dict(cls, data: Optional[Mapping[str, Any]], base_dir: Optional[Path] = None) -> "NoiseSpec":
        data = dict(data or {})
        path = data.get("wav")
        if path is not None:
            path = Path(path)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            path = str(path)
        return cls(
            kind=str(data.get("type", "wav" if path else "white")),
            level_db=float(data.get("level_db", -20.0)),
            path=path,
        )


@dataclass
class SceneSpec:
    """
    Everything needed to render a scene.

    Attributes:
        sources: Source specifications
        scene: Nominal array geometry (used for separation)
        noise: Background noise settings
        duration: Seconds to render
        seed: Master seed of every random draw
        target_input_segsnr_db: If set, source levels and the noise gain are
                                calibrated so every source's mic-input
                                SegSNR hits it; level_db is then only the
                                starting point
        mic_gain_spread_db: Peak-to-peak spread of the rendered mic gains
        mic_gains_db: Explicit per-mic gains; overrides mic_gain_spread_db
        direction_error_deg: Angle between nominal and rendered source directions
    """
    sources: List[SourceSpec]
    scene: ArrayScene
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    duration: float = 5.0
    seed: int = 0
    target_input_segsnr_db: Optional[float] = None
    mic_gain_spread_db: float = 0.0
    direction_error_deg: float = 0.0
    mic_gains_db: Optional[List[float]] = None

    def __post_init__(self):
        if not self.sources:
            raise ConfigError("A scene needs at least one source")
        if len(self.sources) != self.scene.num_sources:
            raise ConfigError("Scene geometry and source list disagree on the number of sources")
        if not np.isfinite(self.duration) or self.duration <= 0:
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if self.mic_gain_spread_db < 0 or self.direction_error_deg < 0:
            raise ConfigError("mic_gain_spread_db and direction_error_deg must be nonnegative")
        if self.target_input_segsnr_db is not None and not np.isfinite(self.target_input_segsnr_db):
            raise ConfigError("target_input_segsnr_db must be finite")
        if self.mic_gains_db is not None:
            self.mic_gains_db = [float(g) for g in self.mic_gains_db]
            if len(self.mic_gains_db) != self.scene.num_mics:
                raise ConfigError(
                    f"mic_gains_db has {len(self.mic_gains_db)} entries for {self.scene.num_mics} mics"
                )
            if not np.all(np.isfinite(self.mic_gains_db)):
                raise ConfigError("mic_gains_db must be finite")
        self.seed = int(self.seed)

    @property
    def num_samples(self) -> int:
        return int(round(self.duration * self.scene.sample_rate))

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base_dir: Optional[Path] = None) -> "SceneSpec":
        sources = [
            SourceSpec.from_dict(entry, m, base_dir) for m, entry in enumerate(data.get("sources") or [])
        ]
        target = data.get("target_input_segsnr_db")
        gains = data.get("mic_gains_db")
        return cls(
            sources=sources,
            scene=scene_from_dict(data),
            noise=NoiseSpec.from_dict(data.get("noise"), base_dir),
            duration=float(data.get("duration", 5.0)),
            seed=int(data.get("seed", 0)),
            target_input_segsnr_db=None if target is None else float(target),
            mic_gain_spread_db=float(data.get("mic_gain_spread_db", 0.0)),
            direction_error_deg=float(data.get("direction_error_deg", 0.0)),
            mic_gains_db=None if gains is None else list(gains),
        )

    @classmethod
    def load(cls, path: Union[str, Path]) -> "SceneSpec":
        """Read a scene file; relative WAV paths resolve against its directory."""
        path = Path(path)
        return cls.from_dict(read_scene_file(path), base_dir=path.parent)


@dataclass
class MixResult:
    """
    Rendered scene.

    Attributes:
        mixture: (N, samples) microphone signals
        references: (M, samples) clean sources at the array centroid
        mic_references: (M, samples) channel average of each source's image
        stems: (M, N, samples) per-source microphone images
        noise: (N, samples) background noise as added
        sample_rate: Hz
        scene: Nominal geometry
        metadata: Seed, gains, rendered directions, measured input SegSNR
    """
    mixture: np.ndarray
    references: np.ndarray
    mic_references: np.ndarray
    stems: np.ndarray
    noise: np.ndarray
    sample_rate: int
    scene: ArrayScene
    metadata: Dict[str, Any] = field(default_factory=dict)


def source_delays(direction: np.ndarray, scene: ArrayScene) -> np.ndarray:
    """(N,) far-field delays in seconds of one direction, relative to the centroid."""
    direction = np.asarray(direction, dtype=np.float64)
    if direction.shape != (3,) or abs(float(np.linalg.norm(direction)) - 1.0) > 1e-9:
        raise ValueError(f"direction must be a unit 3-vector, got {direction}")
    return -((scene.mic_positions - scene.centroid) @ direction) / scene.speed_of_sound


def fractional_delay(signal: np.ndarray, delays: np.ndarray) -> np.ndarray:
    """
    Delay one signal by several (fractional) sample counts.

    Applied as a linear phase ramp on a zero-padded FFT; zero delays are
    plain copies.

    Args:
        signal: (samples,)
        delays: (channels,) delays in samples, negative values advance

    Returns:
        (channels, samples)
    """
    signal = np.asarray(signal, dtype=np.float64)
    delays = np.asarray(delays, dtype=np.float64)
    out = np.empty((delays.size, signal.size))
    still = delays == 0.0
    out[still] = signal
    if np.all(still) or signal.size == 0:
        return out

    shift = int(np.ceil(np.max(np.abs(delays))))
    nfft = next_fast_len(signal.size + 2 * shift + 1, real=True)
    spectrum = rfft(signal, nfft)
    k = np.arange(spectrum.size)
    ramp = np.exp(-2j * np.pi * np.outer(delays[~still], k) / nfft)
    out[~still] = irfft(spectrum * ramp, nfft, axis=-1)[:, : signal.size]
    return out


def spatialize(source: np.ndarray, direction: np.ndarray, scene: ArrayScene) -> np.ndarray:
    """
    Microphone images of a far-field source with unit gains.

    Channel n is the source delayed by tau_n = -(p_n - centroid) . u / c.

    Returns:
        (N, samples)
    """
    return fractional_delay(source, source_delays(direction, scene) * scene.sample_rate)


def perturb_direction(direction: np.ndarray, angle_deg: float, rng: np.random.Generator) -> np.ndarray:
    """Rotate a unit vector by angle_deg about a random axis perpendicular to it."""
    direction = np.asarray(direction, dtype=np.float64)
    if angle_deg == 0.0:
        return direction.copy()
    axis = rng.standard_normal(3)
    axis -= axis.dot(direction) * direction
    axis /= np.linalg.norm(axis)
    angle = np.deg2rad(angle_deg)
    rotated = direction * np.cos(angle) + np.cross(axis, direction) * np.sin(angle)
    return rotated / np.linalg.norm(rotated)


def _unit_power_rows(noise: np.ndarray) -> np.ndarray:
    power = np.mean(noise ** 2, axis=1, keepdims=True)
    return noise / np.sqrt(np.maximum(power, np.finfo(np.float64).tiny))


def _render_noise(spec: NoiseSpec, channels: int, num_samples: int, sample_rate: int, rng) -> np.ndarray:
    """(channels, samples) independent noise, each channel at unit power."""
    if spec.kind == "none":
        return np.zeros((channels, num_samples))
    if spec.kind == "white":
        rows = [white_noise(num_samples, rng) for _ in range(channels)]
    elif spec.kind == "pink":
        rows = [pink_noise(num_samples, rng) for _ in range(channels)]
    else:
        recording, _ = read_mono(spec.path, sample_rate)
        if recording.size == 0:
            raise ConfigError(f"Noise recording {spec.path} is empty")
        rows = []
        for _ in range(channels):
            offset = int(rng.integers(0, recording.size))
            rows.append(recording[(offset + np.arange(num_samples)) % recording.size])
    return _unit_power_rows(np.stack(rows))


def _load_source(spec: SourceSpec, num_samples: int, sample_rate: int, rng) -> np.ndarray:
    if spec.kind == "silence":
        return np.zeros(num_samples)
    if spec.kind == "surrogate":
        return speech_surrogate(num_samples, sample_rate, rng, spec.surrogate)
    signal, _ = read_mono(spec.path, sample_rate)
    if signal.size < num_samples:
        logger.debug(f"Zero-padding {spec.path} from {signal.size} to {num_samples} samples")
        signal = np.pad(signal, (0, num_samples - signal.size))
    return signal[:num_samples]


def _input_segsnr(
    mic_references: np.ndarray,
    mic_average: np.ndarray,
    metrics: MetricsConfig,
) -> List[float]:
    clamp = (metrics.segsnr_floor_db, metrics.segsnr_ceiling_db)
    return [
        segsnr(ref, mic_average, metrics.segment_len, clamp, metrics.silence_ratio)
        for ref in mic_references
    ]


def calibrate_noise_gain(
    mic_references: np.ndarray,
    noise_average: np.ndarray,
    target_db: float,
    reference_gain: float,
    metrics: Optional[MetricsConfig] = None,
    iterations: int = 60,
) -> Optional[float]:
    """
    Noise gain giving a mean mic-input SegSNR of target_db.

    Bisection over the gain in dB, within +-120 dB of reference_gain.

    Args:
        mic_references: (M, samples) source images averaged over the mics
        noise_average: (samples,) unit noise averaged over the mics
        target_db: Desired mean SegSNR
        reference_gain: Starting point of the search (nominal gain)
        metrics: SegSNR settings

    Returns:
        The gain, or None when the interference alone is already below target
    """
    metrics = metrics or MetricsConfig()
    speech_average = mic_references.sum(axis=0)

    def score(gain: float) -> float:
        return float(np.mean(_input_segsnr(mic_references, speech_average + gain * noise_average, metrics)))

    if score(0.0) <= target_db:
        return None
    base = max(reference_gain, np.finfo(np.float64).tiny)
    lo, hi = -120.0, 120.0
    if score(base * 10.0 ** (hi / 20.0)) > target_db:
        logger.warning(f"Input SegSNR target {target_db} dB not reached at maximum noise gain")
        return base * 10.0 ** (hi / 20.0)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if score(base * 10.0 ** (mid / 20.0)) > target_db:
            lo = mid
        else:
            hi = mid
        logger.debug(f"Noise calibration: gain {mid:+.3f} dB")
    return base * 10.0 ** (0.5 * (lo + hi) / 20.0)


def calibrate_levels(
    mic_references: np.ndarray,
    noise_average: np.ndarray,
    target_db: float,
    reference_gain: float,
    metrics: Optional[MetricsConfig] = None,
    iterations: int = 30,
    tolerance_db: float = 0.1,
) -> Tuple[np.ndarray, Optional[float]]:
    """
    Source gains and a noise gain giving every source a mic-input SegSNR of target_db.

    Alternates calibrate_noise_gain() for the mean with a damped correction
    of each source level towards the mean (half the deviation per round).
    Silent sources keep unit gain and are left out of the mean.

    Args:
        mic_references: (M, samples) source images averaged over the mics
        noise_average: (samples,) unit noise averaged over the mics
        target_db: Desired SegSNR of each source
        reference_gain: Nominal noise gain, centre of the noise search
        metrics: SegSNR settings
        iterations: Maximum rounds
        tolerance_db: Stop when every source is this close to target_db

    Returns:
        ((M,) linear source gains, noise gain or None as calibrate_noise_gain())
    """
    metrics = metrics or MetricsConfig()
    gains = np.ones(mic_references.shape[0])
    audible = np.any(mic_references != 0.0, axis=1)
    if not audible.any():
        return gains, None

    noise_gain = None
    worst = float("inf")
    for round_index in range(iterations):
        scaled = mic_references[audible] * gains[audible, None]
        noise_gain = calibrate_noise_gain(scaled, noise_average, target_db, reference_gain, metrics)
        if noise_gain is None:
            break
        scores = np.array(_input_segsnr(scaled, scaled.sum(axis=0) + noise_gain * noise_average, metrics))
        worst = float(np.max(np.abs(scores - target_db)))
        logger.debug(f"Level calibration round {round_index + 1}: worst deviation {worst:.3f} dB")
        if worst <= tolerance_db or np.ptp(scores) <= tolerance_db:
            break
        gains[audible] *= 10.0 ** (-(scores - scores.mean()) / 40.0)
    else:
        logger.warning(f"Per-source input SegSNR still {worst:.2f} dB off target after {iterations} rounds")
    return gains, noise_gain


def mix(
    spec: SceneSpec,
    progress_callback: Optional[Callable[[str, int], None]] = None,
    metrics: Optional[MetricsConfig] = None,
) -> MixResult:
    """
    Render a scene.

    Args:
        spec: Scene description
        progress_callback: Optional (message, percent) callback
        metrics: SegSNR settings for calibration and the metadata

    Returns:
        MixResult; identical specs give bit-identical results

    Raises:
        AudioIOError: If a WAV file is missing or at the wrong sample rate
        ConfigError: On an invalid scene
    """
    def report(message: str, percent: int) -> None:
        if progress_callback:
            progress_callback(message, percent)
        logger.info(f"Mix progress: {percent}% - {message}")

    metrics = metrics or MetricsConfig()
    scene = spec.scene
    rate = scene.sample_rate
    num_samples = spec.num_samples
    num_sources = len(spec.sources)

    seeds = np.random.SeedSequence(spec.seed).spawn(3 + num_sources)
    rng_gains, rng_directions, rng_noise = (np.random.default_rng(s) for s in seeds[:3])
    source_rngs = [np.random.default_rng(s) for s in seeds[3:]]

    if spec.mic_gains_db is not None:
        gains_db = np.asarray(spec.mic_gains_db)
    elif spec.mic_gain_spread_db > 0:
        half = spec.mic_gain_spread_db / 2.0
        gains_db = rng_gains.uniform(-half, half, scene.num_mics)
    else:
        gains_db = np.zeros(scene.num_mics)
    mic_gains = 10.0 ** (gains_db / 20.0)

    report("Rendering sources...", 0)
    references = np.empty((num_sources, num_samples))
    stems = np.empty((num_sources, scene.num_mics, num_samples))
    rendered = []
    for m, source in enumerate(spec.sources):
        signal = _load_source(source, num_samples, rate, source_rngs[m]) * 10.0 ** (source.level_db / 20.0)
        direction = perturb_direction(source.direction, spec.direction_error_deg, rng_directions)
        rendered.append(direction)
        references[m] = signal
        stems[m] = spatialize(signal, direction, scene) * mic_gains[:, None]
        report(f"Rendered {source.label}", int(70 * (m + 1) / num_sources))

    source_gains = np.ones(num_sources)
    speech = stems.sum(axis=0)
    mic_references = stems.mean(axis=1)
    unit_noise = _render_noise(spec.noise, scene.num_mics, num_samples, rate, rng_noise)

    speech_power = float(np.mean(speech ** 2)) if speech.size else 0.0
    reference_power = speech_power if speech_power > 0 else 1.0
    noise_gain = 0.0
    if spec.noise.kind != "none":
        noise_gain = float(np.sqrt(reference_power * 10.0 ** (spec.noise.level_db / 10.0)))

    if spec.target_input_segsnr_db is not None:
        report("Calibrating noise level...", 80)
        if spec.noise.kind == "none":
            logger.warning("Input SegSNR target ignored: the scene has no noise")
        else:
            source_gains, calibrated = calibrate_levels(
                mic_references,
                unit_noise.mean(axis=0),
                spec.target_input_segsnr_db,
                noise_gain,
                metrics,
            )
            references *= source_gains[:, None]
            stems *= source_gains[:, None, None]
            mic_references *= source_gains[:, None]
            if calibrated is None:
                logger.warning(
                    f"Interference alone is below the {spec.target_input_segsnr_db} dB input "
                    f"SegSNR target; keeping the nominal noise level"
                )
            else:
                noise_gain = calibrated

    noise = noise_gain * unit_noise
    mixture = stems.sum(axis=0) + noise

    metadata: Dict[str, Any] = {
        "seed": spec.seed,
        "sample_rate": rate,
        "num_samples": num_samples,
        "labels": [s.label for s in spec.sources],
        "noise_type": spec.noise.kind,
        "noise_gain": noise_gain,
        "mic_gains_db": gains_db.tolist(),
        "source_gains_db": (20.0 * np.log10(source_gains)).tolist(),
        "rendered_directions": [d.tolist() for d in rendered],
    }
    if num_samples >= metrics.segment_len:
        metadata["input_segsnr_db"] = _input_segsnr(mic_references, mixture.mean(axis=0), metrics)

    report("Completed!", 100)
    logger.info(
        f"Mixed {num_sources} sources on {scene.num_mics} mics, {num_samples} samples at {rate} Hz"
    )
    return MixResult(
        mixture=mixture,
        references=references,
        mic_references=mic_references,
        stems=stems,
        noise=noise,
        sample_rate=rate,
        scene=scene,
        metadata=metadata,
    )
