"""
Array geometry presets and the geometric part of scene files.

A scene file is a JSON object; this module reads the keys that define the
ArrayScene (sample_rate, speed_of_sound, array, sources[].direction or
azimuth/elevation, sources[].label) and ignores the rest, which belongs to
the mixer.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Callable, Dict, Mapping, Union
import logging

import numpy as np

from multisource_separator.core.lss import SPEED_OF_SOUND, ArrayScene
from multisource_separator.exceptions import ConfigError

logger = logging.getLogger(__name__)


def cube_array(side: float = 0.3) -> np.ndarray:
    """8 microphones on the vertices of a cube centred at the origin."""
    half = side / 2.0
    corners = [(x, y, z) for x in (-half, half) for y in (-half, half) for z in (-half, half)]
    return np.array(corners, dtype=np.float64)


def linear_array(num_mics: int = 4, spacing: float = 0.05) -> np.ndarray:
    """Uniform linear array along x, centred at the origin."""
    if num_mics < 1:
        raise ConfigError("A linear array needs at least one microphone")
    x = (np.arange(num_mics) - (num_mics - 1) / 2.0) * spacing
    return np.column_stack([x, np.zeros(num_mics), np.zeros(num_mics)])


def circular_array(num_mics: int = 8, radius: float = 0.1) -> np.ndarray:
    """Uniform circular array in the horizontal plane."""
    if num_mics < 1:
        raise ConfigError("A circular array needs at least one microphone")
    phi = 2.0 * np.pi * np.arange(num_mics) / num_mics
    return np.column_stack([radius * np.cos(phi), radius * np.sin(phi), np.zeros(num_mics)])


PRESETS: Dict[str, Callable[..., np.ndarray]] = {
    "cube": cube_array,
    "linear": linear_array,
    "circular": circular_array,
}


def direction_from_angles(azimuth_deg: float, elevation_deg: float = 0.0) -> np.ndarray:
    """Unit vector for an azimuth (from +x towards +y) and an elevation above the xy plane."""
    az = np.deg2rad(azimuth_deg)
    el = np.deg2rad(elevation_deg)
    return np.array([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)])


def parse_direction(entry: Mapping[str, Any]) -> np.ndarray:
    """
    Direction of a source entry: "direction" (3-vector, normalized here) or
    "azimuth" [+ "elevation"] in degrees.
    """
    if "direction" in entry:
        vector = np.asarray(entry["direction"], dtype=np.float64)
        norm = float(np.linalg.norm(vector)) if vector.shape == (3,) else 0.0
        if norm == 0.0 or not np.isfinite(norm):
            raise ConfigError(f"Invalid source direction: {entry['direction']}")
        return vector / norm
    if "azimuth" in entry:
        return direction_from_angles(float(entry["azimuth"]), float(entry.get("elevation", 0.0)))
    raise ConfigError(f"Source entry needs 'direction' or 'azimuth': {dict(entry)}")


def array_from_dict(data: Union[str, Mapping[str, Any], None]) -> np.ndarray:
    """
    Microphone positions from an "array" entry.

    Accepts a preset name, {"preset": name, **preset kwargs} or
    {"positions": [[x, y, z], ...]}. None selects the cube.
    """
    if data is None:
        return cube_array()
    if isinstance(data, str):
        data = {"preset": data}
    data = dict(data)
    if "positions" in data:
        positions = np.asarray(data["positions"], dtype=np.float64)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ConfigError(f"array.positions must be a list of 3-vectors, got shape {positions.shape}")
        return positions
    name = data.pop("preset", "cube")
    if name not in PRESETS:
        raise ConfigError(f"Unknown array preset '{name}', expected one of {sorted(PRESETS)}")
    try:
        return PRESETS[name](**data)
    except TypeError as e:
        raise ConfigError(f"Invalid parameters for array preset '{name}': {e}") from e


def scene_from_dict(data: Mapping[str, Any]) -> ArrayScene:
    """
    Build the ArrayScene described by a scene mapping.

    Raises:
        ConfigError: On missing sources or invalid geometry
    """
    sources = data.get("sources") or []
    if not sources:
        raise ConfigError("Scene must list at least one source")
    directions = np.stack([parse_direction(entry) for entry in sources])
    labels = [str(entry.get("label") or f"source {m + 1}") for m, entry in enumerate(sources)]
    try:
        return ArrayScene(
            mic_positions=array_from_dict(data.get("array")),
            source_directions=directions,
            speed_of_sound=float(data.get("speed_of_sound", SPEED_OF_SOUND)),
            sample_rate=int(data.get("sample_rate", 16000)),
            labels=labels,
        )
    except ValueError as e:
        raise ConfigError(f"Invalid scene: {e}") from e


def scene_to_dict(scene: ArrayScene) -> Dict[str, Any]:
    return {
        "sample_rate": scene.sample_rate,
        "speed_of_sound": scene.speed_of_sound,
        "array": {"positions": scene.mic_positions.tolist()},
        "sources": [
            {"label": label, "direction": direction.tolist()}
            for label, direction in zip(scene.labels, scene.source_directions)
        ],
    }


def read_scene_file(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Load a scene file as a mapping.

    Raises:
        OSError: If the file is missing
        ConfigError: If it is not a JSON object
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Scene file not found: {path}")
    with open(path, "r") as f:
        try:
            data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Could not parse scene file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Scene file {path} must contain a JSON object")
    return data


def load_scene(path: Union[str, Path]) -> ArrayScene:
    """ArrayScene from a scene file."""
    scene = scene_from_dict(read_scene_file(path))
    logger.debug(f"Loaded scene {path}: {scene.num_mics} mics, {scene.num_sources} sources")
    return scene


def save_scene(scene: ArrayScene, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(scene_to_dict(scene), f, indent=2)
    return path
