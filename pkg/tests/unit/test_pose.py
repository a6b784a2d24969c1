"""Tests for essential-matrix pose estimation from correspondences."""

import logging

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from landmark_retrieval.evaluation import (
    MatchSet,
    decompose_essential,
    eight_point,
    estimate_relative_pose,
    sampson_distance,
    select_by_chirality,
    summarize_pose_errors,
)
from landmark_retrieval.evaluation.pose import failure_result, is_degenerate, normalized_coordinates
from landmark_retrieval.exceptions import InsufficientMatchesError
from landmark_retrieval.geometry import Intrinsics, Pose

INTR = Intrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


def skew(v: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def random_motion(rng: np.random.Generator) -> Pose:
    """Camera A -> camera B with a rotation of 5-20 degrees and a baseline of about one meter."""
    axis = rng.normal(size=3)
    angle = np.deg2rad(rng.uniform(5.0, 20.0))
    rotation = Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()
    translation = rng.normal(size=3)
    return Pose(rotation, translation / np.linalg.norm(translation) * rng.uniform(0.5, 1.5))


def correspondences(rng: np.random.Generator, motion: Pose, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Pixels of k scene points seen from A and from B."""
    points_a = np.column_stack([rng.uniform(-2, 2, k), rng.uniform(-1.5, 1.5, k), rng.uniform(4, 8, k)])
    points_b = points_a @ motion.rotation.T + motion.translation

    def pixels(points):
        return np.column_stack(
            [INTR.fx * points[:, 0] / points[:, 2] + INTR.cx, INTR.fy * points[:, 1] / points[:, 2] + INTR.cy]
        )

    return pixels(points_a), pixels(points_b)


def as_matches(pixels_a: np.ndarray, pixels_b: np.ndarray) -> MatchSet:
    k = len(pixels_a)
    cells = np.zeros((k, 2), dtype=np.int64)
    return MatchSet(cells, cells.copy(), np.ones(k), pixels_a, pixels_b)


class TestEssentialMatrix:
    """Test class for the 8-point solver and its decomposition."""

    def test_noiseless_points_satisfy_constraint(self):
        """Test that the 8-point estimate has zero Sampson error on exact correspondences."""
        rng = np.random.default_rng(0)
        for _ in range(20):
            motion = random_motion(rng)
            px_a, px_b = correspondences(rng, motion, 20)
            x_a, x_b = normalized_coordinates(px_a, INTR), normalized_coordinates(px_b, INTR)
            essential = eight_point(x_a, x_b)
            assert sampson_distance(essential, x_a, x_b).max() < 1e-18

    def test_recovers_true_essential(self):
        """Test that the estimate equals [t]x R up to sign."""
        rng = np.random.default_rng(1)
        motion = random_motion(rng)
        px_a, px_b = correspondences(rng, motion, 30)
        essential = eight_point(normalized_coordinates(px_a, INTR), normalized_coordinates(px_b, INTR))
        direction = motion.translation / np.linalg.norm(motion.translation)
        truth = skew(direction) @ motion.rotation
        assert min(np.abs(essential - truth).max(), np.abs(essential + truth).max()) < 1e-8

    def test_singular_values(self):
        """Test that the estimate is projected onto singular values (1, 1, 0)."""
        rng = np.random.default_rng(2)
        px_a, px_b = correspondences(rng, random_motion(rng), 12)
        noisy_b = px_b + rng.normal(scale=0.5, size=px_b.shape)
        essential = eight_point(normalized_coordinates(px_a, INTR), normalized_coordinates(noisy_b, INTR))
        np.testing.assert_allclose(np.linalg.svd(essential, compute_uv=False), [1.0, 1.0, 0.0], atol=1e-12)

    def test_too_few_points(self):
        """Test that fewer than eight pairs raise InsufficientMatchesError."""
        with pytest.raises(InsufficientMatchesError):
            eight_point(np.ones((7, 3)), np.ones((7, 3)))

    def test_chirality_selects_true_motion(self):
        """Test that only the true decomposition puts the points in front of both cameras."""
        rng = np.random.default_rng(3)
        motion = random_motion(rng)
        px_a, px_b = correspondences(rng, motion, 30)
        x_a, x_b = normalized_coordinates(px_a, INTR), normalized_coordinates(px_b, INTR)
        direction = motion.translation / np.linalg.norm(motion.translation)
        essential = skew(direction) @ motion.rotation
        assert len(decompose_essential(essential)) == 4
        rotation, translation, count = select_by_chirality(essential, x_a, x_b)
        assert count == 30
        np.testing.assert_allclose(rotation, motion.rotation, atol=1e-9)
        np.testing.assert_allclose(translation, direction, atol=1e-9)

    def test_degeneracy(self):
        """Test that identical views are flagged degenerate and a general motion is not."""
        rng = np.random.default_rng(4)
        px_a, px_b = correspondences(rng, random_motion(rng), 20)
        x_a, x_b = normalized_coordinates(px_a, INTR), normalized_coordinates(px_b, INTR)
        assert is_degenerate(x_a, x_a)
        assert not is_degenerate(x_a, x_b)
        assert is_degenerate(x_a[:5], x_b[:5])

    def test_degeneracy_with_exactly_eight_pairs(self):
        """Test that eight pairs with a repeated one have a two-dimensional null space."""
        rng = np.random.default_rng(11)
        px_a, px_b = correspondences(rng, random_motion(rng), 8)
        x_a, x_b = normalized_coordinates(px_a, INTR), normalized_coordinates(px_b, INTR)
        assert not is_degenerate(x_a, x_b)
        repeated_a = np.vstack([x_a[:7], x_a[:1]])
        repeated_b = np.vstack([x_b[:7], x_b[:1]])
        assert is_degenerate(repeated_a, repeated_b)


class TestEstimateRelativePose:
    """Test class for the RANSAC pose estimator."""

    def test_noiseless(self):
        """Test rotation error below 0.1 degree on exact correspondences."""
        rng = np.random.default_rng(0)
        for _ in range(10):
            motion = random_motion(rng)
            px_a, px_b = correspondences(rng, motion, 50)
            norm = float(np.linalg.norm(motion.translation))
            result = estimate_relative_pose(as_matches(px_a, px_b), INTR, norm, rng, ground_truth=motion)
            assert result.success
            assert result.rotation_error_deg < 0.1
            assert result.translation_error_m < 1e-3 * norm
            assert result.num_inliers == 50
            assert np.linalg.norm(result.translation) == pytest.approx(norm)

    def test_outliers(self):
        """Test that 30% gross outliers still give at least 95 of 100 poses within 0.5 degree."""
        rng = np.random.default_rng(1)
        good = 0
        for _ in range(100):
            motion = random_motion(rng)
            px_a, px_b = correspondences(rng, motion, 100)
            outliers = rng.choice(100, size=30, replace=False)
            px_b[outliers] = rng.uniform([0, 0], [640, 480], size=(30, 2))
            result = estimate_relative_pose(
                as_matches(px_a, px_b), INTR, float(np.linalg.norm(motion.translation)), rng, ground_truth=motion
            )
            good += result.rotation_error_deg <= 0.5
        assert good >= 95

    def test_too_few_matches(self):
        """Test that fewer than eight matches raise InsufficientMatchesError."""
        rng = np.random.default_rng(2)
        px_a, px_b = correspondences(rng, random_motion(rng), 7)
        with pytest.raises(InsufficientMatchesError):
            estimate_relative_pose(as_matches(px_a, px_b), INTR, 1.0, rng)

    def test_near_zero_baseline_flagged(self, caplog):
        """Test that a tiny ground-truth baseline is flagged and scales the translation."""
        rng = np.random.default_rng(3)
        px_a, px_b = correspondences(rng, random_motion(rng), 30)
        with caplog.at_level(logging.WARNING):
            result = estimate_relative_pose(as_matches(px_a, px_b), INTR, 1e-4, rng)
        assert result.near_zero_baseline
        assert np.linalg.norm(result.translation) == pytest.approx(1e-4)
        assert "Near-zero baseline" in caplog.text

    def test_custom_solver(self):
        """Test that a pluggable minimal solver is used for every hypothesis."""
        rng = np.random.default_rng(4)
        motion = random_motion(rng)
        px_a, px_b = correspondences(rng, motion, 40)
        calls = []

        def solver(x_a, x_b):
            calls.append(len(x_a))
            return eight_point(x_a, x_b)

        result = estimate_relative_pose(
            as_matches(px_a, px_b),
            INTR,
            float(np.linalg.norm(motion.translation)),
            rng,
            solver=solver,
            ground_truth=motion,
        )
        assert calls and calls[0] == 8
        assert result.rotation_error_deg < 0.1

    def test_match_order_does_not_matter(self):
        """Test that shuffling noiseless matches gives the same pose."""
        rng = np.random.default_rng(5)
        motion = random_motion(rng)
        px_a, px_b = correspondences(rng, motion, 40)
        perm = rng.permutation(40)
        norm = float(np.linalg.norm(motion.translation))
        first = estimate_relative_pose(as_matches(px_a, px_b), INTR, norm, np.random.default_rng(0))
        second = estimate_relative_pose(as_matches(px_a[perm], px_b[perm]), INTR, norm, np.random.default_rng(0))
        np.testing.assert_allclose(first.rotation, second.rotation, atol=1e-6)
        np.testing.assert_allclose(first.translation, second.translation, atol=1e-6)

    def test_same_seed_is_deterministic(self):
        """Test that a fixed RANSAC seed reproduces the result exactly."""
        rng = np.random.default_rng(6)
        px_a, px_b = correspondences(rng, random_motion(rng), 40)
        px_b[:10] = rng.uniform([0, 0], [640, 480], size=(10, 2))
        runs = [estimate_relative_pose(as_matches(px_a, px_b), INTR, 1.0, np.random.default_rng(7)) for _ in range(2)]
        np.testing.assert_array_equal(runs[0].rotation, runs[1].rotation)
        assert runs[0].num_inliers == runs[1].num_inliers


class TestSummary:
    def test_aggregates(self):
        """Test the medians, means and threshold fractions of pose errors."""
        summary = summarize_pose_errors([10.0, 40.0, 20.0], [0.5, 2.0, 1.0], num_failures=1)
        assert summary.median_rotation_error == 20.0
        assert summary.mean_rotation_error == pytest.approx(70.0 / 3)
        assert summary.fraction_rotation_below_30deg == pytest.approx(2 / 3)
        assert summary.median_translation_error == 1.0
        assert summary.mean_translation_error == pytest.approx(3.5 / 3)
        assert summary.fraction_translation_below_1m == pytest.approx(2 / 3)
        assert summary.to_dict()["num_failures"] == 1
        assert summary.num_pairs == 3

    def test_empty(self):
        """Test that no pairs give NaN statistics."""
        summary = summarize_pose_errors([], [])
        assert np.isnan(summary.median_rotation_error)
        assert summary.num_pairs == 0

    def test_failure_result(self):
        """Test the worst-case errors recorded for a failed pair."""
        result = failure_result(2.0, num_matches=3)
        assert not result.success
        assert result.rotation_error_deg == 180.0
        assert result.translation_error_m == 4.0
        assert result.to_row()["num_matches"] == 3
