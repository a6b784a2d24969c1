"""
Relative pose from patch matches.

Pipeline per view pair: candidate matches above the score threshold ->
continuity filter -> top-k by score -> RANSAC over a minimal essential-matrix
solver (Sampson distance) -> decomposition into the four (R, t) candidates ->
chirality selection -> translation scaled to the ground-truth length.

Conventions: correspondences go from view A to view B and the estimated pose
maps camera-A coordinates to camera-B coordinates, X_b = R X_a + t, so that
x_b^T E x_a = 0 with E = [t]_x R on normalised image coordinates.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import polars as pl
import yaml
from alive_progress import alive_bar

from ..data import BatchSpec, SceneDataset, build_batch
from ..exceptions import InsufficientMatchesError
from ..geometry import Intrinsics, Pose, relative_pose, rotation_angle_deg
from ..scenegen import PosedView, covisibility
from ..utils import SeedStreams, ordered_map
from .matching import MatchSet, continuity_filter, match_batches

logger = logging.getLogger(__name__)

MIN_MATCHES = 8
FAILURE_ROTATION_DEG = 180.0
FAILURE_TRANSLATION_FACTOR = 2.0
NEAR_ZERO_BASELINE = 1e-3
DEGENERACY_RATIO = 1e-8

# Solver: (x_a, x_b) normalised homogeneous points (k, 3) -> essential matrix
MinimalSolver = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass
class PoseResult:
    rotation: np.ndarray
    translation: np.ndarray
    rotation_error_deg: float = float("nan")
    translation_error_m: float = float("nan")
    num_inliers: int = 0
    num_matches: int = 0
    success: bool = True
    degenerate: bool = False
    near_zero_baseline: bool = False

    def to_row(self) -> dict:
        return {
            "rotation_error_deg": float(self.rotation_error_deg),
            "translation_error_m": float(self.translation_error_m),
            "num_inliers": int(self.num_inliers),
            "num_matches": int(self.num_matches),
            "success": bool(self.success),
            "degenerate": bool(self.degenerate),
            "near_zero_baseline": bool(self.near_zero_baseline),
        }


@dataclass(frozen=True)
class PosePair:
    view_a: PosedView
    view_b: PosedView
    overlap: float

    @property
    def ground_truth(self) -> Pose:
        """Camera A -> camera B."""
        return relative_pose(self.view_b.pose, self.view_a.pose)


@dataclass
class PoseSummary:
    median_translation_error: float
    mean_translation_error: float
    fraction_translation_below_1m: float
    median_rotation_error: float
    mean_rotation_error: float
    fraction_rotation_below_30deg: float
    num_pairs: int = 0
    num_failures: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "median_translation_error_m": float(self.median_translation_error),
            "mean_translation_error_m": float(self.mean_translation_error),
            "fraction_translation_le_1m": float(self.fraction_translation_below_1m),
            "median_rotation_error_deg": float(self.median_rotation_error),
            "mean_rotation_error_deg": float(self.mean_rotation_error),
            "fraction_rotation_le_30deg": float(self.fraction_rotation_below_30deg),
            "num_pairs": int(self.num_pairs),
            "num_failures": int(self.num_failures),
            **self.extra,
        }


# essential matrix


def normalized_coordinates(pixels: np.ndarray, intr: Intrinsics) -> np.ndarray:
    """Pixel (u, v) -> homogeneous normalised camera coordinates (x, y, 1)."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    x = (pixels[:, 0] - intr.cx) / intr.fx
    y = (pixels[:, 1] - intr.cy) / intr.fy
    return np.stack([x, y, np.ones_like(x)], axis=-1)


def _hartley(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Similarity moving the centroid to 0 and the mean distance to sqrt(2)."""
    xy = points[:, :2] / points[:, 2:3]
    centroid = xy.mean(axis=0)
    mean_dist = np.mean(np.linalg.norm(xy - centroid, axis=1))
    scale = math.sqrt(2.0) / mean_dist if mean_dist > 0 else 1.0
    transform = np.array(
        [[scale, 0.0, -scale * centroid[0]], [0.0, scale, -scale * centroid[1]], [0.0, 0.0, 1.0]]
    )
    return (transform @ np.column_stack([xy, np.ones(len(xy))]).T).T, transform


def project_to_essential(matrix: np.ndarray) -> np.ndarray:
    """Closest matrix with singular values (1, 1, 0)."""
    u, _, vt = np.linalg.svd(matrix)
    return u @ np.diag([1.0, 1.0, 0.0]) @ vt


def _design_matrix(x_a: np.ndarray, x_b: np.ndarray) -> np.ndarray:
    return np.einsum("ni,nj->nij", x_b, x_a).reshape(len(x_a), 9)


def eight_point(x_a: np.ndarray, x_b: np.ndarray) -> np.ndarray:
    """
    Normalised 8-point essential matrix from k >= 8 correspondences.

    Args:
        x_a: (k, 3) homogeneous normalised coordinates in view A
        x_b: (k, 3) homogeneous normalised coordinates in view B

    Returns:
        E with x_b^T E x_a = 0, projected onto singular values (1, 1, 0)
    """
    if len(x_a) < MIN_MATCHES:
        raise InsufficientMatchesError(f"8-point solver needs {MIN_MATCHES} pairs, got {len(x_a)}")
    na, ta = _hartley(x_a)
    nb, tb = _hartley(x_b)
    _, _, vt = np.linalg.svd(_design_matrix(na, nb))
    e_norm = vt[-1].reshape(3, 3)
    return project_to_essential(tb.T @ e_norm @ ta)


def sampson_distance(essential: np.ndarray, x_a: np.ndarray, x_b: np.ndarray) -> np.ndarray:
    """Squared first-order geometric error of every correspondence (normalised units)."""
    ex_a = x_a @ essential.T
    etx_b = x_b @ essential
    residual = np.einsum("ni,ni->n", x_b, ex_a)
    denom = ex_a[:, 0] ** 2 + ex_a[:, 1] ** 2 + etx_b[:, 0] ** 2 + etx_b[:, 1] ** 2
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(denom > 0, residual**2 / denom, np.inf)


def decompose_essential(essential: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """The four (R, t) factorisations of E, t of unit length."""
    u, _, vt = np.linalg.svd(essential)
    if np.linalg.det(u) < 0:
        u = -u
    if np.linalg.det(vt) < 0:
        vt = -vt
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    r1 = u @ w @ vt
    r2 = u @ w.T @ vt
    t = u[:, 2]
    return [(r1, t), (r1, -t), (r2, t), (r2, -t)]


def triangulate(rotation: np.ndarray, translation: np.ndarray, x_a: np.ndarray, x_b: np.ndarray) -> np.ndarray:
    """Linear (DLT) triangulation in camera-A coordinates, (k, 3)."""
    p_a = np.hstack([np.eye(3), np.zeros((3, 1))])
    p_b = np.hstack([rotation, translation.reshape(3, 1)])
    a = np.stack(
        [
            x_a[:, 0:1] * p_a[2] - p_a[0],
            x_a[:, 1:2] * p_a[2] - p_a[1],
            x_b[:, 0:1] * p_b[2] - p_b[0],
            x_b[:, 1:2] * p_b[2] - p_b[1],
        ],
        axis=1,
    )
    _, _, vt = np.linalg.svd(a)
    homogeneous = vt[:, -1, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        return homogeneous[:, :3] / homogeneous[:, 3:4]


def chirality_count(rotation: np.ndarray, translation: np.ndarray, x_a: np.ndarray, x_b: np.ndarray) -> int:
    points = triangulate(rotation, translation, x_a, x_b)
    depth_a = points[:, 2]
    depth_b = (points @ rotation.T + translation)[:, 2]
    return int(np.sum((depth_a > 0) & (depth_b > 0) & np.isfinite(depth_a)))


def select_by_chirality(
    essential: np.ndarray, x_a: np.ndarray, x_b: np.ndarray
) -> tuple[np.ndarray, np.ndarray, int]:
    """Decomposition with the most points in front of both cameras (first on ties)."""
    candidates = decompose_essential(essential)
    counts = [chirality_count(r, t, x_a, x_b) for r, t in candidates]
    best = int(np.argmax(counts))
    rotation, translation = candidates[best]
    return rotation, translation, counts[best]


def ransac_essential(
    x_a: np.ndarray,
    x_b: np.ndarray,
    threshold: float,
    rng: np.random.Generator,
    max_iterations: int = 1000,
    confidence: float = 0.99,
    solver: MinimalSolver = eight_point,
    sample_size: int = MIN_MATCHES,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Robust essential matrix.

    Args:
        x_a: (k, 3) normalised points in view A
        x_b: (k, 3) normalised points in view B
        threshold: Inlier threshold on the Sampson distance (normalised units, not squared)
        rng: Sampling generator
        max_iterations: Iteration cap
        confidence: Early exit once this probability of an all-inlier sample is reached
        solver: Minimal solver
        sample_size: Points per minimal sample

    Returns:
        (E, boolean inlier mask); E is refitted on the inliers of the best hypothesis
    """
    k = len(x_a)
    if k < sample_size:
        raise InsufficientMatchesError(f"RANSAC needs {sample_size} pairs, got {k}")
    thr2 = threshold**2
    best_e, best_inliers = None, np.zeros(k, dtype=bool)
    needed = max_iterations
    iteration = 0
    while iteration < min(needed, max_iterations):
        iteration += 1
        sample = rng.choice(k, size=sample_size, replace=False)
        try:
            e = solver(x_a[sample], x_b[sample])
        except np.linalg.LinAlgError:
            continue
        inliers = sampson_distance(e, x_a, x_b) < thr2
        if inliers.sum() > best_inliers.sum():
            best_e, best_inliers = e, inliers
            ratio = inliers.mean()
            if ratio >= 1.0:
                needed = iteration
            else:
                denom = math.log1p(-(ratio**sample_size))
                needed = max_iterations if denom == 0 else math.ceil(math.log(1.0 - confidence) / denom)

    if best_e is None:
        best_e = solver(x_a, x_b)
        best_inliers = sampson_distance(best_e, x_a, x_b) < thr2

    if best_inliers.sum() >= sample_size:
        refit = solver(x_a[best_inliers], x_b[best_inliers])
        refit_inliers = sampson_distance(refit, x_a, x_b) < thr2
        if refit_inliers.sum() >= best_inliers.sum():
            best_e, best_inliers = refit, refit_inliers
    logger.debug(f"RANSAC: {iteration} iterations, {int(best_inliers.sum())}/{k} inliers")
    return best_e, best_inliers


def is_degenerate(x_a: np.ndarray, x_b: np.ndarray) -> bool:
    """The linear system has more than a one-dimensional null space."""
    if len(x_a) < MIN_MATCHES:
        return True
    na, _ = _hartley(x_a)
    nb, _ = _hartley(x_b)
    design = _design_matrix(na, nb)
    # zero rows keep all nine singular values when k == 8
    design = np.vstack([design, np.zeros((max(0, 9 - len(design)), 9))])
    s = np.linalg.svd(design, compute_uv=False)
    return bool(s[-2] < DEGENERACY_RATIO * s[0])


# pose estimation


def pose_errors(rotation: np.ndarray, translation: np.ndarray, ground_truth: Pose) -> tuple[float, float]:
    """(geodesic rotation error in degrees, translation error in meters)."""
    return (
        rotation_angle_deg(rotation, ground_truth.rotation),
        float(np.linalg.norm(translation - ground_truth.translation)),
    )


def failure_result(gt_translation_norm: float, num_matches: int = 0) -> PoseResult:
    return PoseResult(
        rotation=np.eye(3),
        translation=np.zeros(3),
        rotation_error_deg=FAILURE_ROTATION_DEG,
        translation_error_m=FAILURE_TRANSLATION_FACTOR * gt_translation_norm,
        num_matches=num_matches,
        success=False,
    )


def estimate_relative_pose(
    matches: MatchSet,
    intr: Intrinsics,
    gt_translation_norm: float,
    rng: np.random.Generator,
    top_k: int = 100,
    inlier_threshold_px: float = 1.0,
    max_iterations: int = 1000,
    confidence: float = 0.99,
    solver: MinimalSolver = eight_point,
    ground_truth: Pose | None = None,
) -> PoseResult:
    """
    Relative pose (camera A -> camera B) from filtered matches.

    Args:
        matches: Filtered correspondences from view A to view B
        intr: Intrinsics shared by both views
        gt_translation_norm: Length the unit translation is scaled to
        rng: Generator for RANSAC sampling
        top_k: Pairs kept by score
        inlier_threshold_px: Sampson inlier threshold in pixels
        max_iterations: RANSAC iteration cap
        confidence: RANSAC early-exit confidence
        solver: Minimal solver
        ground_truth: When given, errors are filled in

    Raises:
        InsufficientMatchesError: fewer than 8 pairs
    """
    if len(matches) < MIN_MATCHES:
        raise InsufficientMatchesError(f"Need at least {MIN_MATCHES} matches, got {len(matches)}")
    top = matches.top_k(top_k)
    x_a = normalized_coordinates(top.pixels_a, intr)
    x_b = normalized_coordinates(top.pixels_b, intr)
    threshold = inlier_threshold_px / math.sqrt(intr.fx * intr.fy)

    essential, inliers = ransac_essential(
        x_a, x_b, threshold, rng, max_iterations, confidence, solver
    )
    support = inliers if inliers.sum() >= MIN_MATCHES else np.ones(len(top), dtype=bool)
    degenerate = is_degenerate(x_a[support], x_b[support])
    if degenerate:
        logger.warning("Degenerate correspondence geometry: pose is a best-effort estimate")

    rotation, direction, _ = select_by_chirality(essential, x_a[support], x_b[support])
    near_zero = gt_translation_norm < NEAR_ZERO_BASELINE
    if near_zero:
        logger.warning(
            f"Near-zero baseline ({gt_translation_norm:.2e} m): translation direction is ill-defined"
        )
    translation = direction / max(np.linalg.norm(direction), 1e-12) * gt_translation_norm

    result = PoseResult(
        rotation=rotation,
        translation=translation,
        num_inliers=int(inliers.sum()),
        num_matches=len(top),
        degenerate=degenerate,
        near_zero_baseline=near_zero,
    )
    if ground_truth is not None:
        result.rotation_error_deg, result.translation_error_m = pose_errors(rotation, translation, ground_truth)
    return result


# benchmark


def pair_overlap(view_a: PosedView, view_b: PosedView, patch_size: int = 8) -> float:
    """Symmetric co-visible fraction (minimum over both directions)."""
    return min(covisibility(view_a, view_b, patch_size), covisibility(view_b, view_a, patch_size))


def sample_pose_pairs(
    dataset: SceneDataset,
    split: str,
    num_pairs: int,
    overlap_range: tuple[float, float],
    seed: int,
    patch_size: int = 8,
) -> list[PosePair]:
    """
    Low-overlap view pairs of ``split``, drawn deterministically from ``seed``.

    All same-environment pairs with overlap in ``overlap_range`` are candidates;
    if there are fewer than ``num_pairs`` all are used.
    """
    lo, hi = overlap_range
    candidates: list[PosePair] = []
    for env in dataset.environments(split):
        views = dataset.views(env)
        for i in range(len(views)):
            for j in range(i + 1, len(views)):
                overlap = pair_overlap(views[i], views[j], patch_size)
                if lo <= overlap <= hi:
                    candidates.append(PosePair(views[i], views[j], overlap))
    if len(candidates) < num_pairs:
        logger.warning(f"Only {len(candidates)} pairs with overlap in [{lo}, {hi}] (wanted {num_pairs})")
        return candidates
    rng = SeedStreams(seed).generator(f"pose/pairs/{split}")
    picks = np.sort(rng.choice(len(candidates), size=num_pairs, replace=False))
    return [candidates[int(i)] for i in picks]


def summarize_pose_errors(rotation_errors, translation_errors, num_failures: int = 0) -> PoseSummary:
    rot = np.asarray(rotation_errors, dtype=np.float64)
    trans = np.asarray(translation_errors, dtype=np.float64)
    if rot.size == 0:
        nan = float("nan")
        return PoseSummary(nan, nan, nan, nan, nan, nan, 0, num_failures)
    return PoseSummary(
        median_translation_error=float(np.median(trans)),
        mean_translation_error=float(np.mean(trans)),
        fraction_translation_below_1m=float(np.mean(trans <= 1.0)),
        median_rotation_error=float(np.median(rot)),
        mean_rotation_error=float(np.mean(rot)),
        fraction_rotation_below_30deg=float(np.mean(rot <= 30.0)),
        num_pairs=int(rot.size),
        num_failures=num_failures,
    )


def evaluate_pair(encoder, pair: PosePair, pose_cfg, spec: BatchSpec, rng: np.random.Generator) -> PoseResult:
    """Match, filter and estimate one pair; failures get worst-case errors."""
    gt = pair.ground_truth
    gt_norm = float(np.linalg.norm(gt.translation))
    batch_a = build_batch([pair.view_a], spec)
    batch_b = build_batch([pair.view_b], spec)
    matches = match_batches(encoder, batch_a, batch_b, pose_cfg.score_threshold, spec.stride)
    if pose_cfg.continuity_filter:
        matches = continuity_filter(
            matches, batch_a.grid_shape, pose_cfg.mutual_best, pose_cfg.max_displacement_deviation
        )
    try:
        return estimate_relative_pose(
            matches,
            pair.view_a.intr,
            gt_norm,
            rng,
            pose_cfg.top_k,
            pose_cfg.inlier_threshold_px,
            pose_cfg.max_iterations,
            pose_cfg.confidence,
            ground_truth=gt,
        )
    except InsufficientMatchesError as e:
        logger.debug(f"Pose pair failed: {e}")
        return failure_result(gt_norm, len(matches))


def eval_pose_benchmark(
    encoder,
    pairs: list[PosePair],
    pose_cfg,
    spec: BatchSpec | None = None,
    seed: int = 0,
    num_threads: int = 1,
    progress: bool = False,
) -> tuple[list[PoseResult], PoseSummary]:
    """
    Per-pair pose errors and the six summary statistics.

    Each pair k gets its own RANSAC stream ``pose/pair/<k>``, so results do not
    depend on the thread count.
    """
    spec = spec or BatchSpec()
    streams = SeedStreams(seed)
    with alive_bar(len(pairs), title="pose", disable=not progress or not pairs) as bar:

        def _run(item):
            k, pair = item
            result = evaluate_pair(encoder, pair, pose_cfg, spec, streams.generator(f"pose/pair/{k}"))
            bar()
            return result

        results = ordered_map(_run, list(enumerate(pairs)), num_threads)

    summary = summarize_pose_errors(
        [r.rotation_error_deg for r in results],
        [r.translation_error_m for r in results],
        sum(not r.success for r in results),
    )
    logger.info(
        f"Pose [{getattr(encoder, 'name', 'encoder')}]: median rot {summary.median_rotation_error:.2f} deg, "
        f"<=30deg {summary.fraction_rotation_below_30deg:.3f}, median trans "
        f"{summary.median_translation_error:.3f} m, failures {summary.num_failures}/{len(results)}"
    )
    return results, summary


def write_pose_report(
    pairs: list[PosePair], results: list[PoseResult], summary: PoseSummary, output_dir: str | Path
) -> Path:
    """``pose_pairs.csv`` (one row per pair) and ``pose_report.yaml`` (summary)."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    rows = [
        {
            "pair": k,
            "environment": pair.view_a.environment,
            "view_a": pair.view_a.view_id,
            "view_b": pair.view_b.view_id,
            "overlap": float(pair.overlap),
            **result.to_row(),
        }
        for k, (pair, result) in enumerate(zip(pairs, results, strict=True))
    ]
    pl.DataFrame(rows).write_csv(output_dir / "pose_pairs.csv")
    path = output_dir / "pose_report.yaml"
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(summary.to_dict(), f, sort_keys=False)
    logger.info(f"Pose report written: {path}")
    return path
