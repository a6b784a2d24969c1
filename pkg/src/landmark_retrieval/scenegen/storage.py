"""
On-disk format of environments and their views.

One directory per environment::

    env_0003/
        scene.json              # scene manifest (see docs/FORMATS.md)
        view_0000.rgb.u8        # H*W*3 uint8, row-major, RGB interleaved
        view_0000.depth.f4      # H*W little-endian float32, meters, 0 = background
        view_0000.instance.u32  # H*W little-endian uint32
        view_0000.semantic.u32  # H*W little-endian uint32
        view_0000.pose.f64      # 12 little-endian float64, [R | t] row-major
        ...
"""

import json
import logging
from pathlib import Path

import numpy as np

from ..exceptions import DatasetFormatError
from ..geometry import Intrinsics, Pose
from .render import PosedView
from .scene import Scene

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
SCENE_MANIFEST = "scene.json"

_BLOBS = {
    "rgb": ("rgb.u8", "u1"),
    "depth": ("depth.f4", "<f4"),
    "instance": ("instance.u32", "<u4"),
    "semantic": ("semantic.u32", "<u4"),
    "pose": ("pose.f64", "<f8"),
}


def environment_dirname(environment: int) -> str:
    return f"env_{environment:04d}"


def _blob_name(view_id: int, kind: str) -> str:
    return f"view_{view_id:04d}.{_BLOBS[kind][0]}"


def save_environment(directory: str | Path, scene: Scene, views: list[PosedView]) -> Path:
    """
    Write a scene manifest and the binary blobs of its views.

    Args:
        directory: Environment directory (created if missing)
        scene: Scene the views were rendered from
        views: Rendered views, all with ``environment == scene.environment``

    Returns:
        The environment directory
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)

    view_entries = []
    for view in views:
        if view.environment != scene.environment:
            raise ValueError(
                f"View {view.view_id} belongs to environment {view.environment}, "
                f"not {scene.environment}"
            )
        arrays = {
            "rgb": view.rgb,
            "depth": view.depth,
            "instance": view.instance,
            "semantic": view.semantic,
            "pose": view.pose.matrix(),
        }
        for kind, array in arrays.items():
            np.ascontiguousarray(array, dtype=_BLOBS[kind][1]).tofile(directory / _blob_name(view.view_id, kind))
        view_entries.append(
            {
                "view_id": view.view_id,
                "height": int(view.shape[0]),
                "width": int(view.shape[1]),
                "intrinsics": view.intr.to_dict(),
                "files": {kind: _blob_name(view.view_id, kind) for kind in _BLOBS},
            }
        )

    manifest = {
        "format_version": FORMAT_VERSION,
        "scene": scene.to_dict(),
        "views": view_entries,
    }
    with open(directory / SCENE_MANIFEST, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)

    logger.info(f"Environment {scene.environment} saved to {directory} ({len(views)} views)")
    return directory


def _read_blob(path: Path, dtype: str, shape: tuple[int, ...]) -> np.ndarray:
    if not path.exists():
        raise DatasetFormatError(f"Missing blob: {path}")
    data = np.fromfile(path, dtype=dtype)
    if data.size != int(np.prod(shape)):
        raise DatasetFormatError(f"{path} holds {data.size} values, expected {int(np.prod(shape))}")
    return data.reshape(shape)


def load_environment(directory: str | Path) -> tuple[Scene, list[PosedView]]:
    """
    Read an environment written by ``save_environment``.

    Raises:
        DatasetFormatError: missing manifest or blobs, wrong sizes, unknown version
    """
    directory = Path(directory)
    manifest_path = directory / SCENE_MANIFEST
    if not manifest_path.exists():
        raise DatasetFormatError(f"Scene manifest not found: {manifest_path}")
    try:
        with open(manifest_path, encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"Malformed scene manifest {manifest_path}: {e}") from e

    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(
            f"Unsupported scene format version {manifest.get('format_version')} in {manifest_path}"
        )

    scene = Scene.from_dict(manifest["scene"])
    views = []
    for entry in manifest["views"]:
        h, w = entry["height"], entry["width"]
        files = entry["files"]
        blob = {
            kind: _read_blob(directory / files[kind], _BLOBS[kind][1], shape)
            for kind, shape in (
                ("rgb", (h, w, 3)),
                ("depth", (h, w)),
                ("instance", (h, w)),
                ("semantic", (h, w)),
                ("pose", (3, 4)),
            )
        }
        views.append(
            PosedView(
                rgb=blob["rgb"].astype(np.uint8),
                depth=blob["depth"].astype(np.float64),
                instance=blob["instance"].astype(np.uint32),
                semantic=blob["semantic"].astype(np.uint32),
                intr=Intrinsics.from_dict(entry["intrinsics"]),
                pose=Pose.from_matrix(blob["pose"]),
                environment=scene.environment,
                view_id=int(entry["view_id"]),
            )
        )
    logger.debug(f"Environment {scene.environment} loaded from {directory}")
    return scene, views
