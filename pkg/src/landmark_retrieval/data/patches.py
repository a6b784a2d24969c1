"""
Patch extraction from posed views.

Each view is cut into a grid of P x P patches. A patch keeps its pixels
(normalised to [0, 1]), its environment, the world point of its centre pixel
and its majority labels. Patches whose centre pixel is background or has no
valid depth are dropped.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..exceptions import EmptyBatchError
from ..geometry import WorldPoint, unproject_pixels
from ..scenegen import PosedView, SemanticClass, patch_centers
from ..utils import ordered_map

logger = logging.getLogger(__name__)

# panoptic label of an object pixel = THING_OFFSET + shape id
THING_OFFSET = 100


@dataclass(frozen=True)
class PatchRecord:
    """One training patch (x_i, e_i, p_i) plus provenance and labels."""

    pixels: np.ndarray  # (P, P, 3) in [0, 1]
    environment: int
    point: WorldPoint
    view_id: int
    grid: tuple[int, int]
    semantic: int
    instance: int
    panoptic: int
    pixel_labels: np.ndarray  # (P, P) panoptic labels, 0 = background


@dataclass(frozen=True)
class BatchSpec:
    """How views are cut into patches."""

    patch_size: int = 8
    stride: int | None = None
    normalization: float = 255.0


@dataclass(frozen=True)
class PatchBatch:
    """
    Column-wise store of n patches.

    ``view_index`` is the position of the source view in the list the batch
    was built from; ``view_ids`` are the ids inside each environment.
    """

    pixels: np.ndarray  # (n, P*P*3)
    env: np.ndarray  # (n,)
    points: np.ndarray  # (n, 3)
    view_index: np.ndarray  # (n,)
    view_ids: np.ndarray  # (n,)
    grid: np.ndarray  # (n, 2) row, col
    semantic: np.ndarray  # (n,)
    instance: np.ndarray  # (n,)
    panoptic: np.ndarray  # (n,)
    pixel_labels: np.ndarray  # (n, P, P)
    grid_shape: tuple[int, int]

    def __len__(self) -> int:
        return int(self.env.shape[0])

    @property
    def patch_size(self) -> int:
        return int(self.pixel_labels.shape[1])

    def subset(self, indices) -> "PatchBatch":
        indices = np.asarray(indices)
        return PatchBatch(
            pixels=self.pixels[indices],
            env=self.env[indices],
            points=self.points[indices],
            view_index=self.view_index[indices],
            view_ids=self.view_ids[indices],
            grid=self.grid[indices],
            semantic=self.semantic[indices],
            instance=self.instance[indices],
            panoptic=self.panoptic[indices],
            pixel_labels=self.pixel_labels[indices],
            grid_shape=self.grid_shape,
        )

    def for_view(self, view_index: int) -> "PatchBatch":
        return self.subset(np.flatnonzero(self.view_index == view_index))

    def record(self, i: int) -> PatchRecord:
        p = self.patch_size
        return PatchRecord(
            pixels=self.pixels[i].reshape(p, p, 3),
            environment=int(self.env[i]),
            point=WorldPoint(self.points[i], int(self.env[i])),
            view_id=int(self.view_ids[i]),
            grid=(int(self.grid[i, 0]), int(self.grid[i, 1])),
            semantic=int(self.semantic[i]),
            instance=int(self.instance[i]),
            panoptic=int(self.panoptic[i]),
            pixel_labels=self.pixel_labels[i],
        )

    @classmethod
    def from_records(cls, records: list[PatchRecord], view_index: list[int] | None = None,
                     grid_shape: tuple[int, int] = (0, 0)) -> "PatchBatch":
        if not records:
            raise EmptyBatchError("Cannot build a batch from zero patches")
        view_index = view_index if view_index is not None else [r.view_id for r in records]
        return cls(
            pixels=np.stack([r.pixels.reshape(-1) for r in records]),
            env=np.array([r.environment for r in records], dtype=np.int64),
            points=np.stack([r.point.xyz for r in records]),
            view_index=np.asarray(view_index, dtype=np.int64),
            view_ids=np.array([r.view_id for r in records], dtype=np.int64),
            grid=np.array([r.grid for r in records], dtype=np.int64),
            semantic=np.array([r.semantic for r in records], dtype=np.int64),
            instance=np.array([r.instance for r in records], dtype=np.int64),
            panoptic=np.array([r.panoptic for r in records], dtype=np.int64),
            pixel_labels=np.stack([r.pixel_labels for r in records]).astype(np.int64),
            grid_shape=grid_shape,
        )


def majority_label(labels: np.ndarray, ignore: int | None = 0) -> int:
    """Most frequent label; ties go to the lowest id. ``ignore`` only wins if alone."""
    values, counts = np.unique(np.asarray(labels).reshape(-1), return_counts=True)
    if ignore is not None and len(values) > 1:
        keep = values != ignore
        values, counts = values[keep], counts[keep]
    return int(values[np.argmax(counts)])


def panoptic_labels(view: PosedView, shape_lookup: dict[int, int] | None = None) -> np.ndarray:
    """
    Per-pixel panoptic labels: stuff pixels keep their semantic class, object
    pixels get ``THING_OFFSET + shape id`` (instance id if no lookup is given).
    """
    semantic = view.semantic.astype(np.int64)
    instance = view.instance.astype(np.int64)
    if shape_lookup:
        table = np.full(max(int(instance.max()), max(shape_lookup)) + 1, -1, dtype=np.int64)
        for inst, shape in shape_lookup.items():
            table[inst] = shape
        thing_ids = table[instance]
    else:
        thing_ids = instance
    return np.where(semantic == SemanticClass.OBJECT, THING_OFFSET + thing_ids, semantic)


class PatchGridExtractor:
    """
    Cuts views into a (possibly overlapping) grid of square patches.

    Works like a 2D sliding window: ``stride == patch_size`` gives the
    non-overlapping grid.
    """

    def __init__(self, patch_size: int = 8, stride: int | None = None, normalization: float = 255.0):
        """
        Args:
            patch_size: Patch side P in pixels
            stride: Grid step (default: ``patch_size``)
            normalization: Pixel values are divided by this constant
        """
        self.patch_size = patch_size
        self.stride = stride or patch_size
        self.normalization = normalization

        logger.debug(f"PatchGridExtractor: patch_size={patch_size}, stride={self.stride}")

    def grid_shape(self, height: int, width: int) -> tuple[int, int]:
        return (
            (height - self.patch_size) // self.stride + 1,
            (width - self.patch_size) // self.stride + 1,
        )

    def _windows(self, image: np.ndarray) -> np.ndarray:
        p, s = self.patch_size, self.stride
        if image.ndim == 3:
            windows = sliding_window_view(image, (p, p, image.shape[2]))[::s, ::s, 0]
        else:
            windows = sliding_window_view(image, (p, p))[::s, ::s]
        return windows

    def create_patches(self, view: PosedView, shape_lookup: dict[int, int] | None = None) -> list[PatchRecord]:
        """
        Args:
            view: Source view
            shape_lookup: instance id -> shape id of the view's scene

        Returns:
            One record per grid cell whose centre pixel has a valid surface, row-major order
        """
        height, width = view.shape
        p = self.patch_size
        if p > height or p > width:
            raise ValueError(f"Patch size {p} exceeds image {width}x{height}")

        centers = patch_centers(height, width, p, self.stride)
        rows = centers[..., 1].astype(np.int64)
        cols = centers[..., 0].astype(np.int64)
        valid = view.valid[rows, cols]
        if not valid.any():
            return []

        points = unproject_pixels(centers, np.where(valid, view.depth[rows, cols], 1.0), view.intr, view.pose)
        rgb = self._windows(view.rgb.astype(np.float64) / self.normalization)
        panoptic = self._windows(panoptic_labels(view, shape_lookup))
        semantic = self._windows(view.semantic.astype(np.int64))
        instance = self._windows(view.instance.astype(np.int64))

        records = []
        for gr, gc in zip(*np.nonzero(valid), strict=True):
            records.append(
                PatchRecord(
                    pixels=np.array(rgb[gr, gc]),
                    environment=view.environment,
                    point=WorldPoint(points[gr, gc], view.environment),
                    view_id=view.view_id,
                    grid=(int(gr), int(gc)),
                    semantic=majority_label(semantic[gr, gc]),
                    instance=majority_label(instance[gr, gc]),
                    panoptic=majority_label(panoptic[gr, gc]),
                    pixel_labels=np.array(panoptic[gr, gc]),
                )
            )
        return records


def extract_patches(
    view: PosedView,
    patch_size: int = 8,
    shape_lookup: dict[int, int] | None = None,
    stride: int | None = None,
    normalization: float = 255.0,
) -> list[PatchRecord]:
    """Patch records of one view (see ``PatchGridExtractor.create_patches``)."""
    return PatchGridExtractor(patch_size, stride, normalization).create_patches(view, shape_lookup)


def build_batch(
    views: list[PosedView],
    spec: BatchSpec | None = None,
    shape_lookups: dict[int, dict[int, int]] | None = None,
    num_threads: int = 1,
) -> PatchBatch:
    """
    Concatenate the patches of ``views`` in view order.

    Args:
        views: Source views
        spec: Patch geometry and normalisation
        shape_lookups: environment id -> (instance id -> shape id)
        num_threads: Extraction threads (order is preserved)

    Raises:
        EmptyBatchError: no views, or no valid patch in any of them
    """
    if not views:
        raise EmptyBatchError("build_batch called with no views")
    spec = spec or BatchSpec()
    extractor = PatchGridExtractor(spec.patch_size, spec.stride, spec.normalization)
    shape_lookups = shape_lookups or {}

    per_view = ordered_map(
        lambda v: extractor.create_patches(v, shape_lookups.get(v.environment)),
        views,
        num_threads,
    )
    records = [r for recs in per_view for r in recs]
    view_index = [i for i, recs in enumerate(per_view) for _ in recs]
    if not records:
        raise EmptyBatchError(f"No valid patches in {len(views)} views")
    return PatchBatch.from_records(records, view_index, extractor.grid_shape(*views[0].shape))


def create_patch_extractor(patch_size: int = 8, stride: int | None = None,
                           normalization: float = 255.0) -> PatchGridExtractor:
    """
    Build a patch extractor.

    Args:
        patch_size: Patch side in pixels
        stride: Grid step
        normalization: Pixel normalisation constant

    Returns:
        Configured PatchGridExtractor
    """
    return PatchGridExtractor(patch_size=patch_size, stride=stride, normalization=normalization)
