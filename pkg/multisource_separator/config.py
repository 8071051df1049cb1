"""
Configuration module for LeakFilter.

Holds every tunable of the processing chain as a dataclass, handles
loading/saving them as JSON, and records run manifests.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from multisource_separator.exceptions import ConfigError

WINDOWS = ("sqrt_hann", "hann", "rectangular")
SEPARATION_METHODS = ("pseudo_inverse", "delay_and_sum")
SPEECH_ABSENCE_NOISE = ("stationary", "total")


@dataclass
class FrameConfig:
    """Short-time analysis/synthesis settings."""
    frame_len: int = 1024  # samples, power of two
    hop: int = 512
    window: str = "sqrt_hann"  # "sqrt_hann", "hann", "rectangular"
    sample_rate: int = 16000

    def __post_init__(self):
        if self.frame_len < 2 or self.frame_len & (self.frame_len - 1):
            raise ConfigError(f"frame_len must be a power of two, got {self.frame_len}")
        if self.hop <= 0 or self.frame_len % self.hop:
            raise ConfigError(f"hop ({self.hop}) must divide frame_len ({self.frame_len})")
        if self.frame_len < 2 * self.hop:
            raise ConfigError(f"frame_len ({self.frame_len}) must be at least 2*hop ({self.hop})")
        if self.window not in WINDOWS:
            raise ConfigError(f"Unknown window '{self.window}', expected one of {WINDOWS}")
        if self.sample_rate <= 0:
            raise ConfigError(f"sample_rate must be positive, got {self.sample_rate}")

    @property
    def num_bins(self) -> int:
        return self.frame_len // 2 + 1


@dataclass
class McraConfig:
    """Minima-controlled recursive averaging constants."""
    alpha_power: float = 0.8  # smoothing of the power spectrum
    alpha_noise: float = 0.95  # noise update
    window_frames: int = 125  # minimum tracking window (about 4 s at 512/16 kHz)
    ratio_threshold: float = 5.0  # P / P_min above this flags speech
    alpha_presence: float = 0.2  # smoothing of the speech indicator
    init_frames: int = 10  # frames averaged to seed the estimate
    min_bias: float = 2.5  # lambda_stat is capped at min_bias * P_min; 0 disables the cap

    def __post_init__(self):
        for name in ("alpha_power", "alpha_noise", "alpha_presence"):
            value = getattr(self, name)
            if not 0.0 <= value < 1.0:
                raise ConfigError(f"mcra.{name} must lie in [0, 1), got {value}")
        if self.window_frames < 1 or self.init_frames < 1:
            raise ConfigError("mcra.window_frames and mcra.init_frames must be >= 1")
        if self.ratio_threshold <= 1.0:
            raise ConfigError(f"mcra.ratio_threshold must exceed 1, got {self.ratio_threshold}")
        if self.min_bias != 0.0 and self.min_bias < 1.0:
            raise ConfigError(f"mcra.min_bias must be 0 or >= 1, got {self.min_bias}")


@dataclass
class PostfilterConfig:
    """Scalar tuning of the leakage-aware post-filter."""
    alpha: float = 0.5  # loudness exponent
    alpha_p: float = 0.92  # decision-directed memory
    eta: float = 0.1  # leakage factor, power scale (-10 dB)
    alpha_s: float = 0.7  # smoothing of the per-source spectra
    g_min: float = 0.0
    g_max: float = 1.0
    q_min: float = 0.02  # clamp of the a priori absence probability
    q_max: float = 0.98
    zeta_min: float = 1.0  # soft-ramp corners (power ratios)
    zeta_max: float = 10.0
    local_window: int = 3  # bins
    global_window: int = 31  # bins
    frame_on: float = 1.0  # frame-mean zeta that switches the frame latch on
    frame_off: float = 1.0  # ... and off
    speech_absence_noise: str = "stationary"  # "stationary" or "total"
    floor_factor: float = 1e-12  # noise floor relative to mean input power

    def __post_init__(self):
        if not 0.0 < self.alpha <= 2.0:
            raise ConfigError(f"postfilter.alpha must lie in (0, 2], got {self.alpha}")
        if not 0.0 <= self.alpha_p < 1.0:
            raise ConfigError(f"postfilter.alpha_p must lie in [0, 1), got {self.alpha_p}")
        if not 0.0 <= self.eta < 1.0:
            raise ConfigError(f"postfilter.eta must lie in [0, 1), got {self.eta}")
        if not 0.0 <= self.alpha_s < 1.0:
            raise ConfigError(f"postfilter.alpha_s must lie in [0, 1), got {self.alpha_s}")
        if not 0.0 <= self.g_min < 1.0:
            raise ConfigError(f"postfilter.g_min must lie in [0, 1), got {self.g_min}")
        if self.g_max < max(self.g_min, 1e-12):
            raise ConfigError(f"postfilter.g_max ({self.g_max}) must exceed g_min")
        if not 0.0 <= self.q_min <= self.q_max <= 1.0:
            raise ConfigError("postfilter.q_min/q_max must satisfy 0 <= q_min <= q_max <= 1")
        if not 0.0 < self.zeta_min < self.zeta_max:
            raise ConfigError("postfilter.zeta_min/zeta_max must satisfy 0 < zeta_min < zeta_max")
        if self.local_window < 1 or self.global_window < 1:
            raise ConfigError("postfilter.local_window and global_window must be >= 1")
        if self.frame_off > self.frame_on:
            raise ConfigError("postfilter.frame_off must not exceed frame_on")
        if self.speech_absence_noise not in SPEECH_ABSENCE_NOISE:
            raise ConfigError(
                f"postfilter.speech_absence_noise must be one of {SPEECH_ABSENCE_NOISE}"
            )
        if self.floor_factor <= 0.0:
            raise ConfigError("postfilter.floor_factor must be positive")

    @property
    def eta_db(self) -> float:
        """Leakage factor in dB (power scale)."""
        import math
        return 10.0 * math.log10(self.eta) if self.eta > 0 else float("-inf")


@dataclass
class SeparationConfig:
    """Linear separation stage settings."""
    method: str = "pseudo_inverse"  # "pseudo_inverse" or "delay_and_sum"
    cond_limit: float = 1e12  # condition number of A^H A above which we regularize
    ridge: float = 1e-9  # regularization relative to trace/M
    noise_gain_limit_db: float = 20.0  # warn where |w_m|^2 exceeds this

    def __post_init__(self):
        if self.method not in SEPARATION_METHODS:
            raise ConfigError(
                f"Unknown separation method '{self.method}', expected one of {SEPARATION_METHODS}"
            )
        if self.cond_limit <= 1.0 or self.ridge <= 0.0:
            raise ConfigError("separation.cond_limit must exceed 1 and ridge must be positive")


@dataclass
class MetricsConfig:
    """Evaluation settings."""
    segment_len: int = 256  # samples per SegSNR frame (16 ms at 16 kHz)
    segsnr_floor_db: float = -10.0
    segsnr_ceiling_db: float = 35.0
    silence_ratio: float = 1e-10  # frames below this fraction of mean energy are skipped
    lsd_epsilon_ratio: float = 1e-6  # epsilon relative to the reference peak magnitude

    def __post_init__(self):
        if self.segment_len < 1:
            raise ConfigError("metrics.segment_len must be >= 1")
        if self.segsnr_floor_db >= self.segsnr_ceiling_db:
            raise ConfigError("metrics.segsnr_floor_db must be below segsnr_ceiling_db")
        if self.lsd_epsilon_ratio <= 0.0:
            raise ConfigError("metrics.lsd_epsilon_ratio must be positive")


_SECTIONS = {
    "frame": FrameConfig,
    "mcra": McraConfig,
    "postfilter": PostfilterConfig,
    "separation": SeparationConfig,
    "metrics": MetricsConfig,
}


@dataclass
class Config:
    """
    Main configuration class for LeakFilter.

    Groups the per-stage settings. Values come from, in increasing
    precedence: defaults, a JSON config file, explicit overrides
    (command-line flags).
    """

    frame: FrameConfig = field(default_factory=FrameConfig)
    mcra: McraConfig = field(default_factory=McraConfig)
    postfilter: PostfilterConfig = field(default_factory=PostfilterConfig)
    separation: SeparationConfig = field(default_factory=SeparationConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Config":
        """Build a config from a (possibly partial) nested mapping."""
        unknown = set(data) - set(_SECTIONS)
        if unknown:
            raise ConfigError(f"Unknown config sections: {sorted(unknown)}")
        sections = {}
        for name, section_cls in _SECTIONS.items():
            values = dict(data.get(name, {}) or {})
            allowed = {f.name for f in fields(section_cls)}
            bad = set(values) - allowed
            if bad:
                raise ConfigError(f"Unknown keys in config section '{name}': {sorted(bad)}")
            sections[name] = section_cls(**values)
        return cls(**sections)

    def save(self, path: Union[str, Path]) -> None:
        """Save configuration to a JSON file."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)

    @classmethod
    def load(cls, path: Optional[Union[str, Path]] = None) -> "Config":
        """Load configuration from a JSON file, or defaults when path is None."""
        if path is None:
            return cls()
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"Config file not found: {path}")
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Could not parse config file {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Config file {path} must contain a JSON object")
        return cls.from_dict(data)

    def with_overrides(self, overrides: Mapping[str, Any]) -> "Config":
        """
        Return a copy with dotted-key overrides applied.

        Args:
            overrides: Mapping like {"postfilter.eta": 0.0, "frame.hop": 256}.
                       None values are ignored so unset CLI flags fall through.
        """
        data = self.to_dict()
        for key, value in overrides.items():
            if value is None:
                continue
            section, _, name = key.partition(".")
            if section not in data or name not in data[section]:
                raise ConfigError(f"Unknown config key: {key}")
            data[section][name] = value
        return Config.from_dict(data)


@dataclass
class RunManifest:
    """Everything needed to reproduce a CLI run bit-exactly."""
    command: str
    inputs: Dict[str, Optional[str]]
    output_dir: str
    config: Dict[str, Any]
    overrides: Dict[str, Any] = field(default_factory=dict)
    diagnostics: bool = False
    seed: Optional[int] = None
    version: str = "1.0.0"

    def to_dict(self) -> dict:
        return asdict(self)

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @property
    def digest(self) -> str:
        """SHA-256 of the canonical JSON form."""
        return hashlib.sha256(self.canonical_json().encode("utf-8")).hexdigest()

    def save(self, output_dir: Union[str, Path]) -> Path:
        path = Path(output_dir) / "manifest.json"
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "RunManifest":
        with open(path, "r") as f:
            return cls(**json.load(f))


def resolve_paths(paths: List[Optional[Union[str, Path]]]) -> List[Optional[str]]:
    """Resolve paths to absolute strings, keeping None entries."""
    return [str(Path(p).expanduser().resolve()) if p is not None else None for p in paths]
