"""
Ray-cast renderer producing posed RGB-D views with semantic and instance labels.

Rays use the unnormalised camera direction ``((u-cx)/fx, (v-cy)/fy, 1)`` so
the ray parameter of a hit is exactly its camera-frame depth. Colours come
from procedural textures evaluated at the 3D hit point with a fixed
directional light, so the same surface point has the same colour from every
viewpoint.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..geometry import Intrinsics, Pose, pixel_rays
from .scene import Primitive, Scene, SemanticClass

logger = logging.getLogger(__name__)

TEXTURE_SEED = 90210
LIGHT_DIRECTION = np.array([0.3, 0.5, 0.81]) / np.linalg.norm([0.3, 0.5, 0.81])
PATTERNS = ("checker", "stripes", "noise")


@dataclass(frozen=True)
class PosedView:
    """An RGB-D image with camera, environment and per-pixel labels."""

    rgb: np.ndarray  # (H, W, 3) uint8
    depth: np.ndarray  # (H, W) meters, 0 on background
    instance: np.ndarray  # (H, W) uint32, 0 on background
    semantic: np.ndarray  # (H, W) uint32, SemanticClass values
    intr: Intrinsics
    pose: Pose
    environment: int
    view_id: int = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.depth.shape

    @property
    def valid(self) -> np.ndarray:
        return (self.semantic != SemanticClass.BACKGROUND) & (self.depth > 0)


@dataclass(frozen=True)
class TextureParams:
    base: np.ndarray
    accent: np.ndarray
    pattern: str
    scale: float
    direction: np.ndarray
    phase: np.ndarray


def texture_params(texture_id: int) -> TextureParams:
    """Texture parameters derived from the texture id alone."""
    rng = np.random.default_rng([TEXTURE_SEED, int(texture_id)])
    base = rng.uniform(0.15, 0.9, size=3)
    accent = np.clip(base + rng.choice([-1.0, 1.0], size=3) * rng.uniform(0.25, 0.5, size=3), 0.0, 1.0)
    pattern = PATTERNS[int(rng.integers(len(PATTERNS)))]
    scale = float(rng.uniform(0.08, 0.35))
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    phase = rng.uniform(0.2, 0.8, size=3)
    return TextureParams(base, accent, pattern, scale, direction, phase)


def _lattice_hash(ix: np.ndarray, iy: np.ndarray, iz: np.ndarray, texture_id: int) -> np.ndarray:
    h = (
        ix.astype(np.int64) * 73856093
        ^ iy.astype(np.int64) * 19349663
        ^ iz.astype(np.int64) * 83492791
        ^ (int(texture_id) + 1) * 2654435761
    )
    h = (h ^ (h >> 13)) * 1274126177
    h = h ^ (h >> 16)
    return (h & 0xFFFF).astype(np.float64) / 0xFFFF


def _value_noise(points: np.ndarray, texture_id: int) -> np.ndarray:
    cell = np.floor(points)
    frac = points - cell
    smooth = frac * frac * (3.0 - 2.0 * frac)
    cell = cell.astype(np.int64)
    value = np.zeros(points.shape[:-1])
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                corner = _lattice_hash(cell[..., 0] + dx, cell[..., 1] + dy, cell[..., 2] + dz, texture_id)
                wx = smooth[..., 0] if dx else 1.0 - smooth[..., 0]
                wy = smooth[..., 1] if dy else 1.0 - smooth[..., 1]
                wz = smooth[..., 2] if dz else 1.0 - smooth[..., 2]
                value += corner * wx * wy * wz
    return value


def texture_color(texture_id: int, points: np.ndarray) -> np.ndarray:
    """Colour in [0, 1] of texture ``texture_id`` at world points (..., 3)."""
    params = texture_params(texture_id)
    scaled = points / params.scale + params.phase
    if params.pattern == "checker":
        weight = (np.floor(scaled).astype(np.int64).sum(axis=-1) % 2).astype(np.float64)
    elif params.pattern == "stripes":
        weight = (np.floor(scaled @ params.direction).astype(np.int64) % 2).astype(np.float64)
    else:
        weight = _value_noise(scaled, texture_id)
    weight = weight[..., None]
    return params.base * (1.0 - weight) + params.accent * weight


def _intersect_box(prim: Primitive, origin: np.ndarray, dirs: np.ndarray):
    lower, upper = prim.lower, prim.upper
    safe = np.where(dirs == 0.0, 1e-300, dirs)
    t1 = (lower - origin) / safe
    t2 = (upper - origin) / safe
    t_near_axes = np.minimum(t1, t2)
    t_near = t_near_axes.max(axis=-1)
    t_far = np.maximum(t1, t2).min(axis=-1)
    hit = (t_near <= t_far) & (t_near > 0)
    axis = t_near_axes.argmax(axis=-1)
    normal = np.zeros_like(dirs)
    np.put_along_axis(normal, axis[..., None], -np.sign(np.take_along_axis(dirs, axis[..., None], -1)), -1)
    return np.where(hit, t_near, np.inf), normal


def _intersect_sphere(prim: Primitive, origin: np.ndarray, dirs: np.ndarray):
    center = np.asarray(prim.center)
    radius = prim.half_extents[0]
    oc = origin - center
    a = np.einsum("...i,...i->...", dirs, dirs)
    b = 2.0 * dirs @ oc
    c = oc @ oc - radius * radius
    disc = b * b - 4.0 * a * c
    with np.errstate(invalid="ignore"):
        t = (-b - np.sqrt(disc)) / (2.0 * a)
    hit = (disc >= 0) & (t > 0)
    t = np.where(hit, t, np.inf)
    points = origin + dirs * np.where(hit, t, 0.0)[..., None]
    normal = (points - center) / radius
    return t, normal


def render(
    scene: Scene,
    pose: Pose,
    intr: Intrinsics,
    view_id: int = 0,
    depth_noise_std: float = 0.0,
    noise_rng: np.random.Generator | None = None,
) -> PosedView:
    """
    Render one posed view by nearest-hit ray casting.

    Args:
        scene: Environment to render
        pose: Camera pose (world <- camera)
        intr: Camera intrinsics
        view_id: Id stored on the view
        depth_noise_std: Relative std of multiplicative depth noise (0 disables)
        noise_rng: Generator for the depth noise

    Returns:
        ``PosedView``; pixels hitting nothing get label 0 and depth 0
    """
    rows, cols = np.mgrid[0 : intr.height, 0 : intr.width]
    pixels = np.stack([cols + 0.5, rows + 0.5], axis=-1)
    dirs = pixel_rays(pixels, intr) @ pose.rotation.T
    origin = pose.translation

    best_t = np.full(dirs.shape[:-1], np.inf)
    best_idx = np.full(dirs.shape[:-1], -1, dtype=np.int64)
    best_normal = np.zeros_like(dirs)
    for idx, prim in enumerate(scene.primitives):
        if prim.kind == "box":
            t, normal = _intersect_box(prim, origin, dirs)
        else:
            t, normal = _intersect_sphere(prim, origin, dirs)
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_idx = np.where(closer, idx, best_idx)
        best_normal = np.where(closer[..., None], normal, best_normal)

    hit = np.isfinite(best_t)
    depth = np.where(hit, best_t, 0.0)
    points = origin + dirs * depth[..., None]

    rgb = np.zeros(dirs.shape, dtype=np.float64)
    instance = np.zeros(depth.shape, dtype=np.uint32)
    semantic = np.zeros(depth.shape, dtype=np.uint32)
    for idx in np.unique(best_idx[hit]):
        prim = scene.primitives[int(idx)]
        mask = best_idx == idx
        rgb[mask] = texture_color(prim.texture_id, points[mask])
        instance[mask] = prim.instance_id
        semantic[mask] = prim.semantic

    shade = 0.7 + 0.3 * np.abs(best_normal @ LIGHT_DIRECTION)
    rgb = np.where(hit[..., None], rgb * shade[..., None], 0.0)
    rgb = np.round(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)

    if depth_noise_std > 0:
        rng = noise_rng if noise_rng is not None else np.random.default_rng(0)
        noise = 1.0 + depth_noise_std * rng.standard_normal(depth.shape)
        depth = np.where(hit, depth * np.clip(noise, 0.5, 1.5), 0.0)

    if not hit.all():
        logger.debug(f"View {view_id}: {int((~hit).sum())} background pixels")

    return PosedView(
        rgb=rgb,
        depth=depth,
        instance=instance,
        semantic=semantic,
        intr=intr,
        pose=pose,
        environment=scene.environment,
        view_id=view_id,
    )
