"""Shared fixtures: tiny configurations, a generated dataset and oracle encoders."""

import numpy as np
import pytest

from landmark_retrieval.config import RunConfig
from landmark_retrieval.data import generate_dataset

TINY_CONFIG = {
    "seed": 0,
    "scene": {
        "num_environments": 3,
        "num_validation_environments": 1,
        "num_rooms": 1,
        "objects_per_room": 2,
        "views_per_environment": 6,
        "image_width": 32,
        "image_height": 32,
    },
    "train": {
        "rho": 1.0,
        "batch_size": 4,
        "views_per_environment": 2,
        "landmarks_per_batch": 8,
        "epochs": 2,
        "steps_per_epoch": 2,
        "hidden_dim": 16,
        "embedding_dim": 8,
        "validation_batches": 1,
    },
    "retrieval": {"num_batches": 1},
    "segmentation": {"max_steps": 50, "max_views_per_environment": 2},
    "pose": {"num_pairs": 2, "overlap_range": [0.0, 1.0], "max_iterations": 50},
    "coseg": {"num_queries": 1, "num_views": 2},
    "logging": {"progress": False},
}


def tiny_run_config(**sections) -> RunConfig:
    """TINY_CONFIG with some sections updated, e.g. ``tiny_run_config(train={"epochs": 0})``."""
    raw = {k: (dict(v) if isinstance(v, dict) else v) for k, v in TINY_CONFIG.items()}
    for key, value in sections.items():
        if isinstance(value, dict):
            raw[key] = {**raw.get(key, {}), **value}
        else:
            raw[key] = value
    return RunConfig.model_validate(raw)


class PointEncoder:
    """
    Cheating encoder: the inverse stereographic lift of the patch world point,
    shrunk by ``scale``. Cosine scores then decrease with 3D distance.
    """

    name = "oracle"

    def __init__(self, scale: float = 1000.0):
        self.scale = scale

    def embed_points(self, points: np.ndarray) -> np.ndarray:
        p = np.asarray(points, dtype=np.float64) / self.scale
        sq = np.sum(p * p, axis=1, keepdims=True)
        return np.hstack([2.0 * p, sq - 1.0]) / (sq + 1.0)

    def encode(self, batch) -> np.ndarray:
        return self.embed_points(batch.points)


@pytest.fixture
def tiny_config() -> RunConfig:
    return tiny_run_config()


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny_dataset")
    return generate_dataset(root, tiny_run_config())


@pytest.fixture
def point_encoder() -> PointEncoder:
    return PointEncoder()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
