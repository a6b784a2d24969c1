"""Tests for landmark sampling and the positive / universe masks."""

import logging
import math

import numpy as np
import pytest
from scipy.stats import chisquare

from landmark_retrieval.exceptions import EmptyPositiveSetError
from landmark_retrieval.geometry import WorldPoint
from landmark_retrieval.landmarks import (
    LandmarkSampler,
    LandmarkSet,
    MaskPair,
    TentativeLandmark,
    build_masks,
    build_masks_from_arrays,
    positive_indices,
    sample_landmark_embedding,
    sample_landmark_positions,
)
from tests.factories import landmarks_from_sources, make_batch


class TestMasks:
    def test_boundary_is_inside(self):
        """Test that a patch exactly rho away is a positive."""
        masks = build_masks_from_arrays([[0.5, 0.0, 0.0]], [0], [[0.0, 0.0, 0.0]], [0], 0.5, kappa=3.0)
        assert masks.positive[0, 0]
        assert masks.universe[0, 0]

    def test_shell_is_negative(self):
        """Test that a patch between rho and kappa*rho is a negative in the universe."""
        masks = build_masks_from_arrays([[0.4, 0.0, 0.0]], [0], [[0.0, 0.0, 0.0]], [0], 0.2, kappa=3.0)
        assert not masks.positive[0, 0]
        assert masks.universe[0, 0]

    def test_far_patch_is_dont_care(self):
        """Test that a patch beyond kappa*rho is outside the universe."""
        masks = build_masks_from_arrays([[0.7, 0.0, 0.0]], [0], [[0.0, 0.0, 0.0]], [0], 0.2, kappa=3.0)
        assert not masks.universe[0, 0]

    def test_other_environment_is_dont_care(self):
        """Test that a coincident patch of another environment is outside the universe."""
        masks = build_masks_from_arrays([[0.0, 0.0, 0.0]], [1], [[0.0, 0.0, 0.0]], [0], 0.2, kappa=3.0)
        assert not masks.positive[0, 0]
        assert not masks.universe[0, 0]

    def test_infinite_kappa(self):
        """Test that kappa = inf puts every same-environment patch in the universe."""
        points = np.array([[0.0, 0.0, 0.0], [100.0, 0.0, 0.0], [0.0, 0.0, 0.0]])
        masks = build_masks_from_arrays(points, [0, 0, 1], [[0.0, 0.0, 0.0]], [0], 0.2, kappa=math.inf)
        np.testing.assert_array_equal(masks.universe[:, 0], [True, True, False])
        np.testing.assert_array_equal(masks.positive[:, 0], [True, False, False])

    @pytest.mark.parametrize("kappa", [1.0, 0.5, -2.0, -math.inf, math.nan])
    def test_kappa_must_exceed_one(self, kappa):
        """Test that kappa <= 1, -inf and NaN are rejected."""
        with pytest.raises(ValueError):
            build_masks_from_arrays([[0.0, 0.0, 0.0]], [0], [[0.0, 0.0, 0.0]], [0], 0.2, kappa=kappa)

    def test_positive_outside_universe_rejected(self):
        """Test that a MaskPair enforces positive within universe."""
        with pytest.raises(ValueError):
            MaskPair(np.array([[True]]), np.array([[False]]), 3.0)

    def test_laws_on_random_geometry(self):
        """Test containment, environment and monotonicity laws on 1000 random geometries."""
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n, m = rng.integers(1, 20), rng.integers(1, 6)
            points = rng.uniform(0.0, 1.0, size=(n, 3))
            envs = rng.integers(2, size=n)
            lpos = rng.uniform(0.0, 1.0, size=(m, 3))
            lenvs = rng.integers(2, size=m)
            rho = rng.uniform(0.05, 0.4)
            kappa = rng.uniform(1.1, 4.0)
            masks = build_masks_from_arrays(points, envs, lpos, lenvs, rho, kappa)
            assert not np.any(masks.positive & ~masks.universe)
            cross = envs[:, None] != lenvs[None, :]
            assert not np.any(masks.universe & cross)

            bigger_rho = build_masks_from_arrays(points, envs, lpos, lenvs, rho * 1.5, kappa)
            assert not np.any(masks.positive & ~bigger_rho.positive)
            bigger_kappa = build_masks_from_arrays(points, envs, lpos, lenvs, rho, kappa * 1.5)
            assert not np.any(masks.universe & ~bigger_kappa.universe)
            np.testing.assert_array_equal(masks.positive, bigger_kappa.positive)

    def test_per_landmark_radii(self):
        """Test that each landmark uses its own radius."""
        masks = build_masks_from_arrays([[0.3, 0.0, 0.0]], [0], np.zeros((2, 3)), [0, 0], [0.2, 0.4], kappa=3.0)
        np.testing.assert_array_equal(masks.positive[0], [False, True])

    def test_dump_and_load(self, tmp_path):
        """Test the binary mask dump."""
        rng = np.random.default_rng(1)
        masks = build_masks_from_arrays(rng.uniform(size=(7, 3)), np.zeros(7), rng.uniform(size=(3, 3)),
                                        np.zeros(3), 0.4, 2.5)
        loaded = MaskPair.load(masks.dump(tmp_path / "masks.bin"))
        np.testing.assert_array_equal(loaded.positive, masks.positive)
        np.testing.assert_array_equal(loaded.universe, masks.universe)
        assert loaded.kappa == 2.5

    def test_load_rejects_other_files(self, tmp_path):
        """Test that a file without the mask magic is refused."""
        path = tmp_path / "junk.bin"
        path.write_bytes(b"not a mask")
        with pytest.raises(ValueError):
            MaskPair.load(path)

    def test_subset_landmarks(self):
        """Test selecting landmark columns."""
        masks = build_masks_from_arrays(np.zeros((2, 3)), [0, 0], np.zeros((3, 3)), [0, 0, 1], 0.1)
        sub = masks.subset_landmarks([2, 0])
        np.testing.assert_array_equal(sub.positive_counts, [0, 2])


class TestPositions:
    def test_single_patch_batch(self):
        """Test that every landmark of a one-patch batch sits on that patch."""
        batch = make_batch([[1.0, 2.0, 3.0]], envs=[4])
        for point, rho in sample_landmark_positions(batch, 5, seed=0):
            np.testing.assert_array_equal(point.xyz, [1.0, 2.0, 3.0])
            assert point.environment == 4
            assert rho == 0.2

    def test_seeded(self):
        """Test that the same seed draws the same positions."""
        batch = make_batch(np.random.default_rng(0).uniform(size=(30, 3)))
        a = sample_landmark_positions(batch, 10, seed=5)
        b = sample_landmark_positions(batch, 10, seed=5)
        for (pa, _), (pb, _) in zip(a, b, strict=True):
            np.testing.assert_array_equal(pa.xyz, pb.xyz)

    def test_uniform_over_patches(self):
        """Test with a chi-square test that positions are uniform over patches."""
        points = np.arange(10, dtype=np.float64)[:, None] * np.ones((1, 3))
        batch = make_batch(points)
        drawn = sample_landmark_positions(batch, 100_000, seed=2024)
        index = np.array([int(p.xyz[0]) for p, _ in drawn])
        counts = np.bincount(index, minlength=10)
        assert chisquare(counts).pvalue > 0.01

    def test_per_landmark_radii(self):
        """Test that per-landmark radii are attached in order."""
        batch = make_batch(np.zeros((3, 3)))
        radii = [r for _, r in sample_landmark_positions(batch, 3, seed=0, rho_per_landmark=[0.1, 0.2, 0.3])]
        assert radii == [0.1, 0.2, 0.3]

    def test_invalid_count(self):
        """Test that m < 1 is rejected."""
        with pytest.raises(ValueError):
            sample_landmark_positions(make_batch(np.zeros((2, 3))), 0, seed=0)


class TestEmbedding:
    def test_single_positive(self):
        """Test that a landmark with one positive takes that patch's embedding."""
        batch = make_batch([[0.0, 0.0, 0.0], [5.0, 0.0, 0.0]])
        emb = np.array([[1.0, 2.0], [3.0, 4.0]])
        theta, weights = sample_landmark_embedding(
            WorldPoint([0.0, 0.0, 0.0], 0), 0.2, batch, emb, np.random.default_rng(0)
        )
        np.testing.assert_array_equal(theta, [1.0, 2.0])
        np.testing.assert_array_equal(weights, [1.0, 0.0])

    def test_single_mode_picks_a_positive(self):
        """Test that single mode uses one of the positive embeddings."""
        rng = np.random.default_rng(0)
        batch = make_batch(np.vstack([rng.uniform(0.0, 0.1, size=(5, 3)), [[9.0, 9.0, 9.0]]]))
        emb = rng.normal(size=(6, 4))
        for _ in range(20):
            theta, _ = sample_landmark_embedding(WorldPoint([0.0, 0.0, 0.0], 0), 0.5, batch, emb, rng)
            assert any(np.array_equal(theta, emb[i]) for i in range(5))

    def test_mean_mode(self):
        """Test that mean mode sums the positive embeddings divided by the batch size."""
        batch = make_batch([[0.0, 0.0, 0.0], [0.1, 0.0, 0.0], [5.0, 0.0, 0.0], [6.0, 0.0, 0.0]])
        emb = np.array([[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        theta, weights = sample_landmark_embedding(
            WorldPoint([0.0, 0.0, 0.0], 0), 0.2, batch, emb, np.random.default_rng(0), mode="mean"
        )
        np.testing.assert_allclose(theta, [0.5, 0.0])
        np.testing.assert_allclose(weights, [0.25, 0.25, 0.0, 0.0])
        assert theta @ emb[0] / (np.linalg.norm(theta) * np.linalg.norm(emb[0])) == pytest.approx(1.0)

    def test_empty_positive_set(self):
        """Test that a landmark with no patch in its sphere is an error."""
        batch = make_batch([[5.0, 0.0, 0.0]])
        with pytest.raises(EmptyPositiveSetError):
            sample_landmark_embedding(WorldPoint([0.0, 0.0, 0.0], 0), 0.2, batch, np.ones((1, 2)),
                                      np.random.default_rng(0))

    def test_other_environment_is_not_positive(self):
        """Test that positives come from the landmark's environment only."""
        batch = make_batch([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0]], envs=[0, 1])
        np.testing.assert_array_equal(positive_indices(batch, WorldPoint([0.0, 0.0, 0.0], 1), 0.2), [1])

    def test_unknown_mode(self):
        """Test that an unknown embedding mode is rejected."""
        batch = make_batch([[0.0, 0.0, 0.0]])
        with pytest.raises(ValueError):
            sample_landmark_embedding(WorldPoint([0.0, 0.0, 0.0], 0), 0.2, batch, np.ones((1, 2)),
                                      np.random.default_rng(0), mode="median")


class TestSampler:
    def test_min_positives_rule(self):
        """Test that positions with too few positives are redrawn."""
        cluster = np.random.default_rng(0).uniform(0.0, 0.05, size=(5, 3))
        batch = make_batch(np.vstack([cluster, [[10.0, 10.0, 10.0]]]))
        sampler = LandmarkSampler(num_landmarks=30, rho=0.2, min_positives=2)
        landmarks = sampler.sample(batch, np.random.default_rng(1).normal(size=(6, 3)), np.random.default_rng(2))
        assert len(landmarks) == 30
        assert np.all(landmarks.positions[:, 0] < 1.0)
        assert np.all(landmarks.sources < 5)

    def test_exhausted_draws_warn(self, caplog):
        """Test that a batch of isolated patches keeps its landmarks with a warning."""
        batch = make_batch(np.arange(4, dtype=np.float64)[:, None] * np.ones((1, 3)))
        sampler = LandmarkSampler(num_landmarks=3, rho=0.2, min_positives=2, max_resample_attempts=3)
        with caplog.at_level(logging.WARNING):
            landmarks = sampler.sample(batch, np.ones((4, 2)), np.random.default_rng(0))
        assert len(landmarks) == 3
        assert "fewer than 2 positives" in caplog.text

    def test_thetas_follow_weights(self):
        """Test theta = weights @ embeddings and the matching gradient routing."""
        rng = np.random.default_rng(3)
        batch = make_batch(rng.uniform(0.0, 0.3, size=(8, 3)))
        emb = rng.normal(size=(8, 4))
        for mode in ("single", "mean"):
            landmarks = LandmarkSampler(num_landmarks=5, rho=0.5, mode=mode).sample(batch, emb, rng)
            np.testing.assert_allclose(landmarks.thetas, landmarks.weights @ emb)
            grad = rng.normal(size=(5, 4))
            np.testing.assert_allclose(landmarks.theta_gradient_to_patches(grad), landmarks.weights.T @ grad)
            new_emb = rng.normal(size=(8, 4))
            np.testing.assert_allclose(landmarks.with_thetas(new_emb).thetas, landmarks.weights @ new_emb)

    def test_masks_from_sampled_landmarks(self):
        """Test that every sampled landmark has its source patch as a positive."""
        rng = np.random.default_rng(4)
        batch = make_batch(rng.uniform(0.0, 1.0, size=(20, 3)), envs=rng.integers(2, size=20))
        landmarks = LandmarkSampler(num_landmarks=6, rho=0.3).sample(batch, rng.normal(size=(20, 3)), rng)
        masks = build_masks(batch, landmarks, kappa=3.0)
        assert masks.shape == (20, 6)
        assert np.all(masks.positive[landmarks.sources, np.arange(6)])

    def test_from_landmarks(self):
        """Test assembling a set from individual landmarks."""
        a = TentativeLandmark(WorldPoint([0.0, 0.0, 0.0], 0), np.array([1.0, 0.0]), 0.2, source=1)
        b = TentativeLandmark(WorldPoint([1.0, 0.0, 0.0], 1), np.array([0.0, 1.0]), 0.3)
        lset = LandmarkSet.from_landmarks([a, b], n=3)
        np.testing.assert_array_equal(lset.weights, [[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]])
        assert lset[1].environment == 1
        assert lset.subset([1]).rhos[0] == 0.3

    def test_landmark_rejects_zero_embedding(self):
        """Test that a landmark embedding must have non-zero norm."""
        with pytest.raises(ValueError):
            TentativeLandmark(WorldPoint([0.0, 0.0, 0.0], 0), np.zeros(2), 0.2)

    def test_factory_landmarks_match_sources(self):
        """Test the single-source landmark helper used by other tests."""
        batch = make_batch(np.eye(3))
        emb = np.eye(3)
        lset = landmarks_from_sources(batch, [2, 0], emb)
        np.testing.assert_array_equal(lset.thetas, emb[[2, 0]])
