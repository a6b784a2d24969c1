"""
Procedural posed RGB-D environments.
"""

from .render import PosedView, render, texture_color
from .scene import (
    STUFF_CLASSES,
    Primitive,
    Room,
    Scene,
    SceneSpec,
    SemanticClass,
    ShapeTemplate,
    build_object_library,
    generate_scene,
    spec_from_config,
)
from .storage import environment_dirname, load_environment, save_environment
from .trajectory import covisibility, patch_centers, sample_trajectory

__all__ = [
    "STUFF_CLASSES",
    "PosedView",
    "Primitive",
    "Room",
    "Scene",
    "SceneSpec",
    "SemanticClass",
    "ShapeTemplate",
    "build_object_library",
    "covisibility",
    "environment_dirname",
    "generate_scene",
    "load_environment",
    "patch_centers",
    "render",
    "sample_trajectory",
    "save_environment",
    "spec_from_config",
    "texture_color",
]
