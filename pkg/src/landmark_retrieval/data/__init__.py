"""
Patch datasets built from posed views.
"""

from .dataset import DatasetSplit, SceneDataset, generate_dataset
from .patches import (
    THING_OFFSET,
    BatchSpec,
    PatchBatch,
    PatchGridExtractor,
    PatchRecord,
    build_batch,
    create_patch_extractor,
    extract_patches,
    majority_label,
    panoptic_labels,
)

__all__ = [
    "THING_OFFSET",
    "BatchSpec",
    "DatasetSplit",
    "PatchBatch",
    "PatchGridExtractor",
    "PatchRecord",
    "SceneDataset",
    "build_batch",
    "create_patch_extractor",
    "extract_patches",
    "generate_dataset",
    "majority_label",
    "panoptic_labels",
]
