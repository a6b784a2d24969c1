"""
Scene datasets: generation, on-disk manifest, splits and batch sampling.

A dataset directory holds ``dataset.yaml`` plus one ``env_XXXX`` directory
per environment in the format of ``scenegen.storage``.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from ..exceptions import DatasetFormatError, EmptyBatchError
from ..geometry import Intrinsics
from ..scenegen import (
    PosedView,
    Scene,
    environment_dirname,
    generate_scene,
    load_environment,
    render,
    sample_trajectory,
    save_environment,
    spec_from_config,
)
from ..utils import SeedStreams, ordered_map
from .patches import BatchSpec, PatchBatch, build_batch

logger = logging.getLogger(__name__)

MANIFEST_NAME = "dataset.yaml"
MANIFEST_VERSION = 1
SPLITS = ("train", "validation")


@dataclass(frozen=True)
class DatasetSplit:
    """Disjoint train / validation environment ids."""

    train: tuple[int, ...]
    validation: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "train", tuple(int(e) for e in self.train))
        object.__setattr__(self, "validation", tuple(int(e) for e in self.validation))
        overlap = set(self.train) & set(self.validation)
        if overlap:
            raise ValueError(f"Environments {sorted(overlap)} appear in both splits")

    def environments(self, split: str) -> tuple[int, ...]:
        if split not in SPLITS:
            raise ValueError(f"Unknown split {split!r}, expected one of {SPLITS}")
        return getattr(self, split)

    @classmethod
    def tail(cls, num_environments: int, num_validation: int) -> "DatasetSplit":
        """The last ``num_validation`` environments are held out."""
        ids = list(range(num_environments))
        return cls(tuple(ids[: num_environments - num_validation]), tuple(ids[num_environments - num_validation:]))


class SceneDataset:
    """
    Read-only view of a generated dataset.

    Environments are loaded lazily and cached.
    """

    def __init__(self, root: str | Path, cache_data: bool = True):
        """
        Args:
            root: Dataset directory containing ``dataset.yaml``
            cache_data: Keep loaded environments in memory

        Raises:
            DatasetFormatError: missing or malformed manifest
        """
        self.root = Path(root)
        self.cache_data = cache_data
        self._env_cache: dict[int, tuple[Scene, list[PosedView]]] = {}

        manifest_path = self.root / MANIFEST_NAME
        if not manifest_path.exists():
            raise DatasetFormatError(f"Dataset manifest not found: {manifest_path}")
        with open(manifest_path, encoding="utf-8") as f:
            self.manifest: dict[str, Any] = yaml.safe_load(f) or {}
        if self.manifest.get("format_version") != MANIFEST_VERSION:
            raise DatasetFormatError(
                f"Unsupported dataset version {self.manifest.get('format_version')} in {manifest_path}"
            )

        try:
            self.split = DatasetSplit(**self.manifest["split"])
            self.batch_spec = BatchSpec(
                patch_size=int(self.manifest["patch_size"]),
                stride=self.manifest.get("patch_stride"),
                normalization=float(self.manifest["normalization"]),
            )
            self._env_dirs = {int(e["id"]): e["dir"] for e in self.manifest["environments"]}
        except (KeyError, TypeError) as e:
            raise DatasetFormatError(f"Malformed dataset manifest {manifest_path}: {e}") from e

        logger.info(
            f"SceneDataset loaded from {self.root}: {len(self.split.train)} train / "
            f"{len(self.split.validation)} validation environments"
        )

    @property
    def environment_ids(self) -> list[int]:
        return sorted(self._env_dirs)

    def environments(self, split: str) -> tuple[int, ...]:
        return self.split.environments(split)

    def load(self, environment: int) -> tuple[Scene, list[PosedView]]:
        if environment in self._env_cache:
            return self._env_cache[environment]
        if environment not in self._env_dirs:
            raise DatasetFormatError(f"Environment {environment} not in dataset {self.root}")
        loaded = load_environment(self.root / self._env_dirs[environment])
        if self.cache_data:
            self._env_cache[environment] = loaded
        return loaded

    def scene(self, environment: int) -> Scene:
        return self.load(environment)[0]

    def views(self, environment: int) -> list[PosedView]:
        return self.load(environment)[1]

    def shape_lookups(self, environments=None) -> dict[int, dict[int, int]]:
        environments = self.environment_ids if environments is None else environments
        return {e: self.scene(e).shape_lookup() for e in environments}

    def sample_views(
        self,
        split: str,
        batch_size: int,
        views_per_environment: int,
        rng: np.random.Generator,
    ) -> list[PosedView]:
        """
        Draw ``batch_size`` views: ``views_per_environment`` from each of
        ``batch_size // views_per_environment`` environments of ``split``.
        """
        envs = self.environments(split)
        if not envs:
            raise EmptyBatchError(f"Split {split!r} has no environments")
        n_envs = max(1, batch_size // views_per_environment)
        chosen_envs = rng.choice(envs, size=n_envs, replace=n_envs > len(envs))
        views: list[PosedView] = []
        for env in chosen_envs:
            pool = self.views(int(env))
            k = min(views_per_environment, len(pool))
            picks = rng.choice(len(pool), size=k, replace=False)
            views.extend(pool[int(i)] for i in picks)
        return views

    def batch(self, views: list[PosedView], num_threads: int = 1) -> PatchBatch:
        environments = sorted({v.environment for v in views})
        return build_batch(views, self.batch_spec, self.shape_lookups(environments), num_threads)

    def sample_batch(
        self,
        split: str,
        batch_size: int,
        views_per_environment: int,
        rng: np.random.Generator,
        num_threads: int = 1,
    ) -> tuple[list[PosedView], PatchBatch]:
        views = self.sample_views(split, batch_size, views_per_environment, rng)
        return views, self.batch(views, num_threads)

    def all_views(self, split: str, max_per_environment: int | None = None) -> list[PosedView]:
        views = []
        for env in self.environments(split):
            pool = self.views(env)
            views.extend(pool if max_per_environment is None else pool[:max_per_environment])
        return views


def _generate_environment(environment: int, config, streams: SeedStreams) -> tuple[Scene, list[PosedView]]:
    scene_cfg = config.scene
    spec = spec_from_config(scene_cfg, streams.integer_seed(f"scene/{environment}"))
    scene = generate_scene(spec, environment)
    intr = Intrinsics.from_fov(scene_cfg.image_width, scene_cfg.image_height, scene_cfg.fov_deg)
    poses = sample_trajectory(scene, scene_cfg.views_per_environment, streams.generator(f"trajectory/{environment}"))
    noise_rng = streams.generator(f"depth_noise/{environment}")
    views = [
        render(scene, pose, intr, view_id=i, depth_noise_std=scene_cfg.depth_noise_std, noise_rng=noise_rng)
        for i, pose in enumerate(poses)
    ]
    return scene, views


def generate_dataset(root: str | Path, config, num_threads: int = 1) -> SceneDataset:
    """
    Generate every environment of ``config.scene`` and write the dataset.

    Args:
        root: Output directory
        config: ``RunConfig`` (scene, dataset and seed sections are used)
        num_threads: Environments rendered in parallel; output is identical for any value

    Returns:
        The written dataset, opened for reading
    """
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    streams = SeedStreams(config.seed)
    scene_cfg = config.scene
    split = DatasetSplit.tail(scene_cfg.num_environments, scene_cfg.num_validation_environments)

    def _build(environment: int) -> dict[str, Any]:
        scene, views = _generate_environment(environment, config, streams)
        save_environment(root / environment_dirname(environment), scene, views)
        return {
            "id": environment,
            "dir": environment_dirname(environment),
            "num_views": len(views),
            "shapes": sorted(scene.shape_ids),
        }

    entries = ordered_map(_build, range(scene_cfg.num_environments), num_threads)

    manifest = {
        "format_version": MANIFEST_VERSION,
        "seed": config.seed,
        "patch_size": config.dataset.patch_size,
        "patch_stride": config.dataset.patch_stride,
        "normalization": config.dataset.normalization,
        "image": {"width": scene_cfg.image_width, "height": scene_cfg.image_height, "fov_deg": scene_cfg.fov_deg},
        "library": {
            "library_seed": scene_cfg.library_seed,
            "object_library_size": scene_cfg.object_library_size,
            "palette_size": scene_cfg.palette_size,
        },
        "split": {"train": list(split.train), "validation": list(split.validation)},
        "environments": entries,
    }
    with open(root / MANIFEST_NAME, "w", encoding="utf-8") as f:
        yaml.safe_dump(manifest, f, default_flow_style=False, sort_keys=False)

    logger.info(f"Dataset written to {root}: {len(entries)} environments")
    return SceneDataset(root)
