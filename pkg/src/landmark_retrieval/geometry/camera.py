"""
Pinhole camera model and rigid transforms.

Conventions:
- ``Pose`` maps camera coordinates to world coordinates (world <- camera):
  ``X_world = R @ X_cam + t``; ``t`` is the camera origin in the world frame.
- Camera frame: x right, y down, z forward. Depth is the camera-frame z
  coordinate, not the ray length.
- Pixel coordinates are continuous; pixel (row r, col c) covers
  [c, c+1) x [r, r+1) and its ray passes through (c + 0.5, r + 0.5).
"""

import math
from dataclasses import dataclass, field

import numpy as np

from ..exceptions import BehindCameraError, InvalidDepthError, OutOfBoundsError

ORTHONORMAL_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError(f"Focal lengths must be positive: fx={self.fx}, fy={self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(
                f"Principal point ({self.cx}, {self.cy}) outside image "
                f"{self.width}x{self.height}"
            )

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float) -> "Intrinsics":
        """Square pixels, principal point at the image center, horizontal FOV."""
        f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return cls(fx=f, fy=f, cx=width / 2.0, cy=height / 2.0, width=width, height=height)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def contains(self, pixel) -> bool:
        u, v = float(pixel[0]), float(pixel[1])
        return 0.0 <= u < self.width and 0.0 <= v < self.height

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Intrinsics":
        return cls(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
        )


@dataclass(frozen=True)
class Pose:
    """Rigid transform world <- camera."""

    rotation: np.ndarray
    translation: np.ndarray
    check: bool = field(default=True, repr=False, compare=False)

    def __post_init__(self):
        rotation = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        translation = np.array(self.translation, dtype=np.float64).reshape(3)
        rotation.setflags(write=False)
        translation.setflags(write=False)
        object.__setattr__(self, "rotation", rotation)
        object.__setattr__(self, "translation", translation)
        if self.check:
            if not np.all(np.isfinite(rotation)) or not np.all(np.isfinite(translation)):
                raise ValueError("Pose contains non-finite values")
            gram_error = np.abs(rotation.T @ rotation - np.eye(3)).max()
            det_error = abs(np.linalg.det(rotation) - 1.0)
            if gram_error > ORTHONORMAL_TOL or det_error > ORTHONORMAL_TOL:
                raise ValueError(
                    f"Rotation is not in SO(3): |RtR - I|={gram_error:.2e}, "
                    f"|det - 1|={det_error:.2e}"
                )

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0)) -> "Pose":
        """Camera at ``eye`` looking at ``target``; image "up" follows ``up``."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        norm = np.linalg.norm(forward)
        if norm == 0:
            raise ValueError("look_at: eye and target coincide")
        forward /= norm
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        if np.linalg.norm(right) < 1e-9:
            raise ValueError("look_at: viewing direction parallel to up vector")
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        rotation = np.stack([right, down, forward], axis=1)
        return cls(orthonormalize(rotation), eye)

    def apply(self, points_cam: np.ndarray) -> np.ndarray:
        """Camera -> world for an (..., 3) array."""
        return points_cam @ self.rotation.T + self.translation

    def apply_inverse(self, points_world: np.ndarray) -> np.ndarray:
        """World -> camera for an (..., 3) array."""
        return (points_world - self.translation) @ self.rotation

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation, check=False)

    def compose(self, other: "Pose") -> "Pose":
        """``self ∘ other``: apply ``other`` first, then ``self``."""
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
            check=False,
        )

    def matrix(self) -> np.ndarray:
        """3x4 [R | t], row-major."""
        return np.hstack([self.rotation, self.translation[:, None]])

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Pose":
        matrix = np.asarray(matrix, dtype=np.float64).reshape(3, 4)
        return cls(matrix[:, :3], matrix[:, 3])


@dataclass(frozen=True)
class WorldPoint:
    """A 3D point in one environment's world frame."""

    xyz: np.ndarray
    environment: int

    def __post_init__(self):
        xyz = np.array(self.xyz, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(xyz)):
            raise ValueError(f"World point has non-finite coordinates: {xyz}")
        xyz.setflags(write=False)
        object.__setattr__(self, "xyz", xyz)


def orthonormalize(rotation: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix (SVD projection onto SO(3))."""
    u, _, vt = np.linalg.svd(np.asarray(rotation, dtype=np.float64))
    d = np.sign(np.linalg.det(u @ vt))
    return u @ np.diag([1.0, 1.0, d]) @ vt


def pixel_rays(pixels: np.ndarray, intr: Intrinsics) -> np.ndarray:
    """Camera-frame rays with z = 1 for an (..., 2) array of pixel coordinates."""
    pixels = np.asarray(pixels, dtype=np.float64)
    x = (pixels[..., 0] - intr.cx) / intr.fx
    y = (pixels[..., 1] - intr.cy) / intr.fy
    return np.stack([x, y, np.ones_like(x)], axis=-1)


def unproject_pixels(
    pixels: np.ndarray, depths: np.ndarray, intr: Intrinsics, pose: Pose
) -> np.ndarray:
    """Vectorised unprojection: (..., 2) pixels and (...) depths -> (..., 3) world."""
    depths = np.asarray(depths, dtype=np.float64)
    return pose.apply(pixel_rays(pixels, intr) * depths[..., None])


def project_points(
    points: np.ndarray, intr: Intrinsics, pose: Pose
) -> tuple[np.ndarray, np.ndarray]:
    """
    Vectorised projection of (..., 3) world points.

    Returns pixels (..., 2) and camera-frame depths (...). Points with
    non-positive depth get NaN pixels; callers filter on depth.
    """
    cam = pose.apply_inverse(np.asarray(points, dtype=np.float64))
    z = cam[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(z > 0, intr.fx * cam[..., 0] / z + intr.cx, np.nan)
        v = np.where(z > 0, intr.fy * cam[..., 1] / z + intr.cy, np.nan)
    return np.stack([u, v], axis=-1), z


def unproject(pixel, depth: float, intr: Intrinsics, pose: Pose, environment: int = 0) -> WorldPoint:
    """
    World point on the ray through ``pixel`` at camera-frame depth ``depth``.

    Raises:
        InvalidDepthError: depth is not strictly positive (or not finite).
        OutOfBoundsError: pixel lies outside the image.
    """
    if not (np.isfinite(depth) and depth > 0):
        raise InvalidDepthError(f"Depth must be positive, got {depth}")
    if not intr.contains(pixel):
        raise OutOfBoundsError(
            f"Pixel {tuple(pixel)} outside image {intr.width}x{intr.height}"
        )
    xyz = unproject_pixels(np.asarray(pixel, dtype=np.float64), np.float64(depth), intr, pose)
    return WorldPoint(xyz, environment)


def project(point: WorldPoint, intr: Intrinsics, pose: Pose) -> tuple[np.ndarray, float]:
    """
    Pinhole projection of a world point.

    Raises:
        BehindCameraError: the point's camera-frame depth is not positive.
    """
    cam = pose.apply_inverse(point.xyz)
    if cam[2] <= 0:
        raise BehindCameraError(f"Point {point.xyz} has camera depth {cam[2]:.3g}")
    pixel = np.array(
        [intr.fx * cam[0] / cam[2] + intr.cx, intr.fy * cam[1] / cam[2] + intr.cy]
    )
    return pixel, float(cam[2])


def relative_pose(a: Pose, b: Pose) -> Pose:
    """Transform mapping camera-b coordinates to camera-a coordinates."""
    rel = a.inverse().compose(b)
    return Pose(orthonormalize(rel.rotation), rel.translation)


def rotation_angle_deg(r1: np.ndarray, r2: np.ndarray) -> float:
    """Geodesic angle between two rotations, in degrees."""
    cos = (np.trace(np.asarray(r1).T @ np.asarray(r2)) - 1.0) / 2.0
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))


def angle_between_deg(v1: np.ndarray, v2: np.ndarray) -> float:
    n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
    if n1 == 0 or n2 == 0:
        return 180.0
    cos = float(np.dot(v1, v2) / (n1 * n2))
    return float(np.degrees(np.arccos(np.clip(cos, -1.0, 1.0))))
