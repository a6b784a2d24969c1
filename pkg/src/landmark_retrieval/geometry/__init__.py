from .camera import (
    Intrinsics,
    Pose,
    WorldPoint,
    angle_between_deg,
    orthonormalize,
    pixel_rays,
    project,
    project_points,
    relative_pose,
    rotation_angle_deg,
    unproject,
    unproject_pixels,
)

__all__ = [
    "Intrinsics",
    "Pose",
    "WorldPoint",
    "angle_between_deg",
    "orthonormalize",
    "pixel_rays",
    "project",
    "project_points",
    "relative_pose",
    "rotation_angle_deg",
    "unproject",
    "unproject_pixels",
]
