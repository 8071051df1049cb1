"""
Shared fixtures: seeded generators, small scenes and one rendered 3-source scene.
"""

import numpy as np
import pytest

from multisource_separator.config import FrameConfig
from multisource_separator.core.lss import ArrayScene
from multisource_separator.scene.geometry import cube_array, direction_from_angles


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def frame_cfg():
    return FrameConfig()


@pytest.fixture
def two_source_scene():
    """8-mic cube, two sources with different azimuths and elevations."""
    return ArrayScene(
        mic_positions=cube_array(),
        source_directions=np.stack([direction_from_angles(30.0, 10.0), direction_from_angles(200.0, -15.0)]),
    )


@pytest.fixture
def single_mic_scene():
    """One microphone at the origin, one source: the separator is the identity."""
    return ArrayScene(
        mic_positions=np.zeros((1, 3)),
        source_directions=np.array([[1.0, 0.0, 0.0]]),
    )


def three_source_scene_dict(duration=5.0, seed=7, target=-5.0):
    """Scene file content for the 3-source fixture (2 + 1 voices, white noise, mic gain and direction mismatch)."""
    voices = [
        {"f0": 110.0, "formants": [600.0, 1200.0, 2500.0], "bandwidths": [80.0, 110.0, 160.0]},
        {"f0": 130.0, "formants": [450.0, 1700.0, 2600.0], "bandwidths": [80.0, 110.0, 160.0]},
        {"f0": 210.0, "formants": [700.0, 1900.0, 2900.0], "bandwidths": [90.0, 120.0, 170.0]},
    ]
    for voice in voices:
        voice.update(syllable_s=[0.2, 0.4], pause_s=[0.05, 0.25])
    return {
        "sample_rate": 16000,
        "array": {"preset": "cube", "side": 0.3},
        "sources": [
            {"label": "voice 1", "azimuth": 0.0, "surrogate": voices[0]},
            {"label": "voice 2", "azimuth": 120.0, "surrogate": voices[1]},
            {"label": "voice 3", "azimuth": 240.0, "elevation": 20.0, "surrogate": voices[2]},
        ],
        "noise": {"type": "white", "level_db": -10.0},
        "duration": duration,
        "seed": seed,
        "target_input_segsnr_db": target,
        "mic_gains_db": [6.0, -6.0, -6.0, 6.0, -6.0, 6.0, 6.0, -6.0],
        "direction_error_deg": 3.0,
    }


@pytest.fixture(scope="session")
def three_source_mix():
    """Rendered 3-source scene at about -5 dB input SegSNR."""
    from multisource_separator.scene.mixer import SceneSpec, mix

    return mix(SceneSpec.from_dict(three_source_scene_dict()))


@pytest.fixture(scope="session")
def three_source_scene_data():
    """Scene mapping of the 3-source fixture, 1 s long for CLI runs."""
    return three_source_scene_dict(duration=1.0)
