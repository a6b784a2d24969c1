"""
Camera placement inside generated environments.

Views are spread over the rooms round-robin. Within a room every camera looks
at one of a few shared focus points (objects when the room has any), which
gives the overlapping views the retrieval sets need.
"""

import logging

import numpy as np

from ..exceptions import SceneGenerationError
from ..geometry import Pose, project_points, unproject_pixels
from .render import PosedView
from .scene import Room, Scene

logger = logging.getLogger(__name__)

CAMERA_WALL_MARGIN = 0.4
OBJECT_CLEARANCE = 0.25
MIN_FOCUS_DISTANCE = 1.0
CAMERA_HEIGHT_RANGE = (0.9, 1.9)
FOCUS_PER_ROOM = 2
MAX_PLACEMENT_ATTEMPTS = 500


def _focus_points(scene: Scene, room: Room, rng: np.random.Generator) -> list[np.ndarray]:
    objects = [p for p in scene.objects if p.room == room.index]
    if objects:
        picks = rng.permutation(len(objects))[:FOCUS_PER_ROOM]
        return [np.asarray(objects[int(i)].center, dtype=np.float64) for i in picks]
    lower, upper = np.asarray(room.lower), np.asarray(room.upper)
    return [
        rng.uniform(lower + 0.25 * (upper - lower), upper - 0.25 * (upper - lower))
        for _ in range(FOCUS_PER_ROOM)
    ]


def _inside_object(scene: Scene, room: Room, point: np.ndarray) -> bool:
    for prim in scene.objects:
        if prim.room != room.index:
            continue
        if np.all(np.abs(point - np.asarray(prim.center)) < np.asarray(prim.half_extents) + OBJECT_CLEARANCE):
            return True
    return False


def sample_trajectory(scene: Scene, num_views: int, seed: int | np.random.Generator) -> list[Pose]:
    """
    Sample ``num_views`` camera poses in free space, aimed at scene content.

    Args:
        scene: Environment
        num_views: Number of poses (>= 2)
        seed: Seed or generator; same seed, same poses

    Returns:
        Poses (world <- camera), camera y axis pointing down in the image

    Raises:
        ValueError: ``num_views`` < 2
        SceneGenerationError: no valid placement found for a view
    """
    if num_views < 2:
        raise ValueError(f"num_views must be >= 2, got {num_views}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    focus = {room.index: _focus_points(scene, room, rng) for room in scene.rooms}
    poses: list[Pose] = []
    for view in range(num_views):
        room = scene.rooms[view % len(scene.rooms)]
        target = focus[room.index][(view // len(scene.rooms)) % FOCUS_PER_ROOM]
        lower = np.asarray(room.lower) + CAMERA_WALL_MARGIN
        upper = np.asarray(room.upper) - CAMERA_WALL_MARGIN
        for _ in range(MAX_PLACEMENT_ATTEMPTS):
            eye = rng.uniform(lower, upper)
            eye[2] = rng.uniform(*CAMERA_HEIGHT_RANGE)
            if _inside_object(scene, room, eye):
                continue
            if np.linalg.norm(eye[:2] - target[:2]) < MIN_FOCUS_DISTANCE:
                continue
            jitter = rng.normal(scale=0.15, size=3)
            poses.append(Pose.look_at(eye, target + jitter))
            break
        else:
            raise SceneGenerationError(
                f"No valid camera placement for view {view} in room {room.index} "
                f"of environment {scene.environment}"
            )
    return poses


def patch_centers(height: int, width: int, patch_size: int, stride: int | None = None) -> np.ndarray:
    """
    Continuous (u, v) coordinates (gh, gw, 2) of each grid cell's centre pixel.

    The centre pixel of a cell starting at row r0 is r0 + patch_size // 2; its
    ray passes through the middle of that pixel.
    """
    stride = stride or patch_size
    rows = np.arange((height - patch_size) // stride + 1) * stride + patch_size // 2 + 0.5
    cols = np.arange((width - patch_size) // stride + 1) * stride + patch_size // 2 + 0.5
    cc, rr = np.meshgrid(cols, rows)
    return np.stack([cc, rr], axis=-1)


def covisibility(view_a: PosedView, view_b: PosedView, patch_size: int = 8, depth_tol: float = 0.05) -> float:
    """
    Fraction of ``view_a``'s valid patch centres visible in ``view_b``.

    A centre is visible when it projects inside ``view_b`` and the rendered
    depth there agrees with the projected depth (relative tolerance).
    """
    if view_a.environment != view_b.environment:
        return 0.0
    centers = patch_centers(*view_a.shape, patch_size)
    rows = centers[..., 1].astype(np.int64)
    cols = centers[..., 0].astype(np.int64)
    depth = view_a.depth[rows, cols]
    valid = view_a.valid[rows, cols]
    if not valid.any():
        return 0.0
    world = unproject_pixels(centers[valid], depth[valid], view_a.intr, view_a.pose)
    pixels, z = project_points(world, view_b.intr, view_b.pose)
    intr = view_b.intr
    inside = (z > 0) & np.all(np.isfinite(pixels), axis=-1)
    inside &= (pixels[:, 0] >= 0) & (pixels[:, 0] < intr.width)
    inside &= (pixels[:, 1] >= 0) & (pixels[:, 1] < intr.height)
    seen = np.zeros(len(world), dtype=bool)
    idx = np.flatnonzero(inside)
    if len(idx):
        u = np.clip(pixels[idx, 0].astype(np.int64), 0, intr.width - 1)
        v = np.clip(pixels[idx, 1].astype(np.int64), 0, intr.height - 1)
        rendered = view_b.depth[v, u]
        seen[idx] = (rendered > 0) & (np.abs(rendered - z[idx]) <= depth_tol * np.maximum(z[idx], 1.0))
    return float(seen.mean())
