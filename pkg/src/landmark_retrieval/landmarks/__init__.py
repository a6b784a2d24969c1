from .masks import MaskPair, build_masks_from_arrays, build_masks
from .sampling import (
    LandmarkSampler,
    LandmarkSet,
    TentativeLandmark,
    positive_indices,
    sample_landmark_embedding,
    sample_landmark_positions,
)

__all__ = [
    "LandmarkSampler",
    "LandmarkSet",
    "MaskPair",
    "TentativeLandmark",
    "build_masks_from_arrays",
    "build_masks",
    "positive_indices",
    "sample_landmark_embedding",
    "sample_landmark_positions",
]
