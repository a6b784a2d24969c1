"""
Patch-to-patch matching between two views and outlier rejection by the
continuity of the match field.

The continuity filter applies two conditions:

1. mutual best: (a, b) survives only if b is a's best-scoring candidate and
   a is b's best-scoring candidate;
2. local smoothness: a pair whose grid displacement deviates by more than
   ``max_deviation`` cells from the median displacement of the surviving
   pairs in the 8-neighbourhood of its source cell is rejected. Rejections
   are applied pass by pass until none remains; pairs without neighbours
   are kept.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..data import BatchSpec, PatchBatch, build_batch
from ..objective import cosine_scores
from ..scenegen import PosedView

logger = logging.getLogger(__name__)

NEIGHBOUR_OFFSETS = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)]


@dataclass(frozen=True)
class MatchSet:
    """
    Candidate patch correspondences between view A and view B.

    ``cells_*`` are (row, col) grid cells, ``pixels_*`` the continuous (u, v)
    coordinates of the cell centres.
    """

    cells_a: np.ndarray  # (k, 2)
    cells_b: np.ndarray  # (k, 2)
    scores: np.ndarray  # (k,)
    pixels_a: np.ndarray  # (k, 2)
    pixels_b: np.ndarray  # (k, 2)

    def __len__(self) -> int:
        return int(self.scores.shape[0])

    def subset(self, indices) -> "MatchSet":
        indices = np.asarray(indices, dtype=np.int64)
        return MatchSet(
            self.cells_a[indices],
            self.cells_b[indices],
            self.scores[indices],
            self.pixels_a[indices],
            self.pixels_b[indices],
        )

    def top_k(self, k: int) -> "MatchSet":
        """The k highest-scoring pairs; equal scores keep their original order."""
        order = np.argsort(-self.scores, kind="stable")[:k]
        return self.subset(np.sort(order))

    def pairs(self) -> set[tuple[int, int, int, int]]:
        return {
            (int(a[0]), int(a[1]), int(b[0]), int(b[1]))
            for a, b in zip(self.cells_a, self.cells_b, strict=True)
        }

    @classmethod
    def empty(cls) -> "MatchSet":
        z2 = np.zeros((0, 2))
        return cls(z2.astype(np.int64), z2.astype(np.int64), np.zeros(0), z2, z2)


def cell_centers(cells: np.ndarray, patch_size: int, stride: int | None = None) -> np.ndarray:
    """(row, col) grid cells -> continuous (u, v) of their centre pixels."""
    stride = stride or patch_size
    cells = np.asarray(cells, dtype=np.float64).reshape(-1, 2)
    offset = patch_size // 2 + 0.5
    return np.stack([cells[:, 1] * stride + offset, cells[:, 0] * stride + offset], axis=-1)


def match_embeddings(
    emb_a: np.ndarray,
    cells_a: np.ndarray,
    emb_b: np.ndarray,
    cells_b: np.ndarray,
    score_threshold: float = 0.7,
    patch_size: int = 8,
    stride: int | None = None,
) -> MatchSet:
    """
    All pairs whose cosine score reaches ``score_threshold``, row-major in (a, b).
    """
    if len(emb_a) == 0 or len(emb_b) == 0:
        return MatchSet.empty()
    scores = cosine_scores(emb_a, emb_b).values
    ia, ib = np.nonzero(scores >= score_threshold)
    cells_a = np.asarray(cells_a, dtype=np.int64)[ia]
    cells_b = np.asarray(cells_b, dtype=np.int64)[ib]
    return MatchSet(
        cells_a,
        cells_b,
        scores[ia, ib],
        cell_centers(cells_a, patch_size, stride),
        cell_centers(cells_b, patch_size, stride),
    )


def match_batches(
    encoder, batch_a: PatchBatch, batch_b: PatchBatch, score_threshold: float = 0.7, stride: int | None = None
) -> MatchSet:
    return match_embeddings(
        encoder.encode(batch_a),
        batch_a.grid,
        encoder.encode(batch_b),
        batch_b.grid,
        score_threshold,
        batch_a.patch_size,
        stride,
    )


def match_patches(
    encoder,
    view_a: PosedView,
    view_b: PosedView,
    score_threshold: float = 0.7,
    spec: BatchSpec | None = None,
) -> MatchSet:
    """
    Candidate correspondences between the patches of two views.

    Args:
        encoder: Anything with ``encode(batch) -> (n, c)``
        view_a: First view
        view_b: Second view
        score_threshold: Minimum cosine score (default 0.7)
        spec: Patch geometry

    Returns:
        MatchSet with every pair scoring at least ``score_threshold``
    """
    spec = spec or BatchSpec()
    batch_a = build_batch([view_a], spec)
    batch_b = build_batch([view_b], spec)
    matches = match_batches(encoder, batch_a, batch_b, score_threshold, spec.stride)
    logger.debug(f"match_patches: {len(matches)} candidate pairs at threshold {score_threshold}")
    return matches


def _best_in_group(cells: np.ndarray, scores: np.ndarray) -> np.ndarray:
    """Mask of the highest-scoring pair per distinct cell (lowest index on ties)."""
    k = len(scores)
    _, group = np.unique(cells, axis=0, return_inverse=True)
    group = group.reshape(-1)
    order = np.lexsort((np.arange(k), -scores, group))
    first = np.ones(k, dtype=bool)
    first[1:] = group[order][1:] != group[order][:-1]
    best = np.zeros(k, dtype=bool)
    best[order[first]] = True
    return best


def mutual_best(matches: MatchSet) -> np.ndarray:
    """Boolean mask of pairs that are the best candidate of both their cells."""
    if len(matches) == 0:
        return np.zeros(0, dtype=bool)
    return _best_in_group(matches.cells_a, matches.scores) & _best_in_group(matches.cells_b, matches.scores)


def _smoothness_pass(cells_a: np.ndarray, disp: np.ndarray, grid_shape, max_deviation: float) -> np.ndarray:
    gh, gw = grid_shape
    field = np.full((gh, gw, 2), np.nan)
    field[cells_a[:, 0], cells_a[:, 1]] = disp
    reject = np.zeros(len(cells_a), dtype=bool)
    for i, (r, c) in enumerate(cells_a):
        neighbours = [
            field[r + dr, c + dc]
            for dr, dc in NEIGHBOUR_OFFSETS
            if 0 <= r + dr < gh and 0 <= c + dc < gw and not np.isnan(field[r + dr, c + dc, 0])
        ]
        if not neighbours:
            continue
        median = np.median(np.stack(neighbours), axis=0)
        reject[i] = np.linalg.norm(disp[i] - median) > max_deviation
    return reject


def continuity_filter(
    matches: MatchSet,
    grid_shape: tuple[int, int],
    use_mutual_best: bool = True,
    max_deviation: float = 2.0,
) -> MatchSet:
    """
    Remove matches that break the continuity of the A -> B mapping.

    Args:
        matches: Candidate pairs
        grid_shape: Patch grid (rows, cols) of view A
        use_mutual_best: Apply the mutual-best condition
        max_deviation: Allowed distance, in grid cells, to the neighbourhood median

    Returns:
        A subset of ``matches``; applying the filter again returns it unchanged
    """
    if len(matches) == 0:
        return matches
    cells_a = np.asarray(matches.cells_a, dtype=np.int64)
    gh, gw = grid_shape
    if np.any(cells_a < 0) or np.any(cells_a[:, 0] >= gh) or np.any(cells_a[:, 1] >= gw):
        raise ValueError(f"Match cells outside the {gh}x{gw} grid")

    kept = np.flatnonzero(mutual_best(matches)) if use_mutual_best else np.arange(len(matches))
    if not use_mutual_best and len(np.unique(cells_a, axis=0)) != len(cells_a):
        # several candidates per source cell: keep the best one for the field
        kept = np.flatnonzero(_best_in_group(cells_a, matches.scores))

    disp = (matches.cells_b - matches.cells_a).astype(np.float64)
    while len(kept):
        reject = _smoothness_pass(cells_a[kept], disp[kept], grid_shape, max_deviation)
        if not reject.any():
            break
        kept = kept[~reject]

    if len(kept) < len(matches):
        logger.debug(f"continuity_filter: kept {len(kept)}/{len(matches)} pairs")
    return matches.subset(kept)

