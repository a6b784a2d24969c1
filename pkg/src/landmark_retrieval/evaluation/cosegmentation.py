"""
Co-segmentation by thresholding the cosine score between a query patch and
every patch of a set of views.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import yaml  # noqa: E402
from matplotlib.patches import Rectangle  # noqa: E402

from ..data import BatchSpec, SceneDataset, build_batch  # noqa: E402
from ..objective import cosine_scores  # noqa: E402
from ..scenegen import PosedView  # noqa: E402
from ..utils import SeedStreams  # noqa: E402

logger = logging.getLogger(__name__)


@dataclass
class CosegResult:
    """Per-view (gh, gw) masks and scores; cells without a valid patch are False / NaN."""

    query_view: PosedView
    query_cell: tuple[int, int]
    query_point: np.ndarray
    views: list[PosedView]
    masks: list[np.ndarray]
    scores: list[np.ndarray]
    points: list[np.ndarray]  # (gh, gw, 3) world points, NaN where invalid
    threshold: float

    @property
    def selected(self) -> int:
        return int(sum(m.sum() for m in self.masks))


def cosegment(
    encoder,
    query_view: PosedView,
    query_patch: tuple[int, int],
    other_views: list[PosedView],
    threshold: float = 0.7,
    spec: BatchSpec | None = None,
) -> CosegResult:
    """
    Mark the patches of ``other_views`` whose cosine score with the query patch
    exceeds ``threshold``.

    Args:
        encoder: Anything with ``encode(batch) -> (n, c)``
        query_view: View holding the query patch
        query_patch: (row, col) grid cell of the query
        other_views: Views to segment (may include ``query_view``)
        threshold: Score threshold in (-1, 1)
        spec: Patch geometry

    Raises:
        ValueError: threshold outside (-1, 1) or the query cell has no valid patch
    """
    if not -1.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (-1, 1), got {threshold}")
    spec = spec or BatchSpec()
    query_batch = build_batch([query_view], spec)
    hit = np.flatnonzero(np.all(query_batch.grid == np.asarray(query_patch), axis=1))
    if len(hit) == 0:
        raise ValueError(f"Query cell {tuple(query_patch)} has no valid patch in view {query_view.view_id}")
    query = query_batch.subset(hit)
    query_emb = encoder.encode(query)

    masks, scores, points = [], [], []
    for view in other_views:
        batch = build_batch([view], spec)
        gh, gw = batch.grid_shape
        grid_scores = np.full((gh, gw), np.nan)
        grid_points = np.full((gh, gw, 3), np.nan)
        s = cosine_scores(encoder.encode(batch), query_emb).values[:, 0]
        grid_scores[batch.grid[:, 0], batch.grid[:, 1]] = s
        grid_points[batch.grid[:, 0], batch.grid[:, 1]] = batch.points
        masks.append(np.nan_to_num(grid_scores, nan=-np.inf) > threshold)
        scores.append(grid_scores)
        points.append(grid_points)

    result = CosegResult(
        query_view=query_view,
        query_cell=(int(query_patch[0]), int(query_patch[1])),
        query_point=query.points[0],
        views=list(other_views),
        masks=masks,
        scores=scores,
        points=points,
        threshold=threshold,
    )
    logger.debug(f"cosegment: {result.selected} patches selected in {len(other_views)} views")
    return result


def geometric_agreement(result: CosegResult, rho: float) -> dict:
    """
    Compare the selection with the geometric ground truth: patches of the
    query's environment whose world point lies within ``rho`` of the query point.

    Returns:
        recall (selected among geometric positives), precision and counts
    """
    selected = positives = hits = 0
    for view, mask, pts in zip(result.views, result.masks, result.points, strict=True):
        near = np.zeros(mask.shape, dtype=bool)
        if view.environment == result.query_view.environment:
            with np.errstate(invalid="ignore"):
                near = np.linalg.norm(pts - result.query_point, axis=-1) <= rho
        selected += int(mask.sum())
        positives += int(near.sum())
        hits += int((mask & near).sum())
    return {
        "recall": hits / positives if positives else float("nan"),
        "precision": hits / selected if selected else float("nan"),
        "selected": selected,
        "positives": positives,
    }


def save_overlays(result: CosegResult, path: str | Path, patch_size: int = 8, stride: int | None = None) -> Path:
    """One PNG: the query view with its patch outlined, then every view with its mask."""
    stride = stride or patch_size
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    panels = [result.query_view, *result.views]
    fig, axes = plt.subplots(1, len(panels), figsize=(2.5 * len(panels), 2.8), squeeze=False)
    for k, (ax, view) in enumerate(zip(axes[0], panels, strict=True)):
        ax.imshow(view.rgb)
        if k == 0:
            r, c = result.query_cell
            ax.add_patch(
                Rectangle((c * stride - 0.5, r * stride - 0.5), patch_size, patch_size,
                          fill=False, edgecolor="yellow", linewidth=1.5)
            )
            ax.set_title("query", fontsize=8)
        else:
            mask = result.masks[k - 1]
            overlay = np.zeros((*view.shape, 4))
            for r, c in zip(*np.nonzero(mask), strict=True):
                overlay[r * stride : r * stride + patch_size, c * stride : c * stride + patch_size] = (1.0, 0.1, 0.1, 0.5)
            ax.imshow(overlay)
            ax.set_title(f"env {view.environment} / view {view.view_id}", fontsize=8)
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
    return path


def run_coseg(
    encoder,
    dataset: SceneDataset,
    coseg_cfg,
    rho: float,
    output_dir: str | Path,
    seed: int = 0,
    split: str = "validation",
) -> list[dict]:
    """
    Co-segment ``num_queries`` random query patches of ``split``, each against
    ``num_views`` views of the query's environment, and write a report.
    """
    output_dir = Path(output_dir)
    spec = dataset.batch_spec
    rng = SeedStreams(seed).generator(f"coseg/{split}")
    envs = dataset.environments(split)
    records = []
    for q in range(coseg_cfg.num_queries):
        env = int(rng.choice(envs))
        views = dataset.views(env)
        query_view = views[int(rng.integers(len(views)))]
        query_batch = build_batch([query_view], spec)
        r, c = query_batch.grid[int(rng.integers(len(query_batch)))]
        picks = rng.choice(len(views), size=min(coseg_cfg.num_views, len(views)), replace=False)
        others = [views[int(i)] for i in np.sort(picks)]

        result = cosegment(encoder, query_view, (int(r), int(c)), others, coseg_cfg.threshold, spec)
        record = {
            "query": q,
            "environment": env,
            "view": query_view.view_id,
            "cell": [int(r), int(c)],
            **geometric_agreement(result, rho),
        }
        if coseg_cfg.save_overlays:
            overlay = save_overlays(result, output_dir / "coseg" / f"query_{q:03d}.png", spec.patch_size, spec.stride)
            record["overlay"] = str(overlay.relative_to(output_dir))
        records.append(record)

    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / "coseg_report.yaml"
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump({"threshold": float(coseg_cfg.threshold), "queries": records}, f, sort_keys=False)
    logger.info(f"Co-segmentation report written: {path}")
    return records
