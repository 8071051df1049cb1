"""
Scene module for LeakFilter.

Array presets, scene files, test signals and the synthetic mixer.
"""

from multisource_separator.scene.geometry import load_scene, scene_from_dict
from multisource_separator.scene.mixer import MixResult, SceneSpec, mix, spatialize

__all__ = ["load_scene", "scene_from_dict", "MixResult", "SceneSpec", "mix", "spatialize"]
