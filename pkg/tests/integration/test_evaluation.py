"""Downstream evaluations on the tiny generated dataset with oracle and baseline encoders."""

import numpy as np
import polars as pl
import pytest

from landmark_retrieval.data import build_batch
from landmark_retrieval.evaluation import (
    cosegment,
    eval_pose_benchmark,
    eval_retrieval,
    geometric_agreement,
    mean_top_k_ap,
    run_coseg,
    run_segmentation,
    sample_pose_pairs,
    save_overlays,
    write_pose_report,
    write_retrieval_report,
)
from landmark_retrieval.models import FrozenRandomEncoder, NoiseEncoder
from landmark_retrieval.objective import ObjectiveReport
from tests.conftest import tiny_run_config


class LabelEncoder:
    """Cheating encoder: one-hot semantic class of each patch."""

    name = "labels"

    def encode(self, batch) -> np.ndarray:
        return np.eye(5)[np.asarray(batch.semantic, dtype=np.int64)]


def random_encoder(config) -> FrozenRandomEncoder:
    patch = config.dataset.patch_size
    return FrozenRandomEncoder((patch * patch * 3, 16, 16, 8), seed=0)


class TestRetrieval:
    """Test class for the retrieval evaluation."""

    def test_geometric_oracle_beats_chance(self, tiny_dataset, point_encoder):
        """Test that ranking by 3D distance clearly beats the positive rate."""
        config = tiny_run_config(retrieval={"num_batches": 3})
        result = eval_retrieval(point_encoder, tiny_dataset, "train", config.retrieval, config.train)
        assert result.exact_ap > result.chance_ap + 0.05
        assert 0.0 < result.chance_ap < 1.0

    def test_masks_do_not_depend_on_encoder(self, tiny_dataset, point_encoder):
        """Test that every encoder is scored against the same landmarks and masks."""
        config = tiny_run_config()
        noise = eval_retrieval(NoiseEncoder(8, seed=0), tiny_dataset, "train", config.retrieval, config.train)
        oracle = eval_retrieval(point_encoder, tiny_dataset, "train", config.retrieval, config.train)
        assert noise.chance_ap == oracle.chance_ap

    def test_deterministic(self, tiny_dataset):
        """Test that the fixed evaluation seed reproduces the result exactly."""
        config = tiny_run_config()
        encoder = random_encoder(config)
        first = eval_retrieval(encoder, tiny_dataset, "validation", config.retrieval, config.train)
        second = eval_retrieval(encoder, tiny_dataset, "validation", config.retrieval, config.train, num_threads=2)
        assert first.to_dict() == second.to_dict()

    def test_report(self, tiny_dataset, tmp_path):
        """Test the YAML report and the per-batch CSV."""
        config = tiny_run_config(retrieval={"num_batches": 2})
        encoder = random_encoder(config)
        results = [eval_retrieval(encoder, tiny_dataset, s, config.retrieval, config.train) for s in ("train", "validation")]
        write_retrieval_report(results, tmp_path)
        batches = pl.read_csv(tmp_path / "retrieval_batches.csv")
        assert batches.height == 4
        assert {"split", "batch", "vectorized_ap", "exact_ap"} <= set(batches.columns)

    def test_top_k_landmarks_reported(self, tiny_dataset, point_encoder):
        """Test that the k best landmarks score at least the average landmark."""
        config = tiny_run_config(retrieval={"num_batches": 2, "top_k": 2})
        result = eval_retrieval(point_encoder, tiny_dataset, "train", config.retrieval, config.train)
        average = np.mean([np.nanmean(r.per_landmark_ap) for r in result.batch_reports])
        assert result.top_k_ap >= average - 1e-12
        assert result.to_dict()["top_k_ap"] == result.top_k_ap

    def test_mean_top_k_ap(self):
        """Test the top-k mean on hand-made per-landmark values."""
        report = ObjectiveReport(0.5, np.array([0.2, np.nan, 0.9, 0.6]), 0.5, np.zeros(4), 0.01)
        assert mean_top_k_ap(report, 2) == pytest.approx(0.75)
        assert mean_top_k_ap(report, 10) == pytest.approx((0.2 + 0.9 + 0.6) / 3)


class TestCosegmentation:
    """Test class for query-patch co-segmentation."""

    def _query(self, dataset):
        views = dataset.views(dataset.environments("validation")[0])
        cell = tuple(int(v) for v in build_batch([views[0]], dataset.batch_spec).grid[0])
        return views, cell

    def test_noise_encoder_selects_nothing(self, tiny_dataset):
        """Test that content-blind embeddings select no patch at a high threshold."""
        views, cell = self._query(tiny_dataset)
        result = cosegment(NoiseEncoder(8, seed=0), views[0], cell, views[1:], 0.99, tiny_dataset.batch_spec)
        assert result.selected == 0

    def test_geometric_oracle_has_full_recall(self, tiny_dataset, point_encoder):
        """Test that distance-ranked embeddings select every geometric positive."""
        views, cell = self._query(tiny_dataset)
        result = cosegment(point_encoder, views[0], cell, views, 0.5, tiny_dataset.batch_spec)
        agreement = geometric_agreement(result, rho=1.0)
        assert agreement["positives"] > 0
        assert agreement["recall"] == 1.0
        assert result.masks[0][cell]

    def test_invalid_threshold(self, tiny_dataset, point_encoder):
        """Test that thresholds outside (-1, 1) raise ValueError."""
        views, cell = self._query(tiny_dataset)
        with pytest.raises(ValueError):
            cosegment(point_encoder, views[0], cell, views, 1.0, tiny_dataset.batch_spec)

    def test_overlay_png(self, tiny_dataset, point_encoder, tmp_path):
        """Test that overlays are written as PNG files."""
        views, cell = self._query(tiny_dataset)
        result = cosegment(point_encoder, views[0], cell, views[:2], 0.7, tiny_dataset.batch_spec)
        path = save_overlays(result, tmp_path / "overlay.png", tiny_dataset.batch_spec.patch_size)
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_run_coseg_report(self, tiny_dataset, tmp_path):
        """Test that run_coseg records one entry per query."""
        config = tiny_run_config(coseg={"num_queries": 2, "save_overlays": False})
        records = run_coseg(NoiseEncoder(8), tiny_dataset, config.coseg, config.train.rho, tmp_path)
        assert len(records) == 2
        assert (tmp_path / "coseg_report.yaml").exists()
        assert "overlay" not in records[0]


class TestSegmentation:
    """Test class for linear-probe segmentation on the dataset."""

    def test_label_oracle(self, tiny_dataset):
        """Test that features carrying the patch class give high pixel accuracy."""
        config = tiny_run_config(segmentation={"max_steps": 500, "label_kinds": ["semantic"]})
        results = run_segmentation(LabelEncoder(), tiny_dataset, config.segmentation)
        overall = results["semantic"].groups["overall"]
        assert overall.pixel_accuracy > 0.6
        assert 0.0 <= overall.mIoU <= 1.0

    def test_both_label_kinds(self, tiny_dataset):
        """Test that semantic and panoptic probes report stuff, things and overall."""
        config = tiny_run_config()
        results = run_segmentation(random_encoder(config), tiny_dataset, config.segmentation)
        assert set(results) == {"semantic", "panoptic"}
        for metrics in results.values():
            assert set(metrics.groups) == {"stuff", "things", "overall"}
            assert metrics.groups["overall"].num_pixels > 0


class TestPose:
    """Test class for the pose benchmark."""

    def test_pairs_respect_overlap_range(self, tiny_dataset):
        """Test that sampled pairs share an environment and lie in the overlap range."""
        pairs = sample_pose_pairs(tiny_dataset, "validation", 3, (0.0, 0.9), seed=0)
        assert pairs
        for pair in pairs:
            assert pair.view_a.environment == pair.view_b.environment
            assert 0.0 <= pair.overlap <= 0.9
        again = sample_pose_pairs(tiny_dataset, "validation", 3, (0.0, 0.9), seed=0)
        assert [(p.view_a.view_id, p.view_b.view_id) for p in pairs] == [
            (p.view_a.view_id, p.view_b.view_id) for p in again
        ]

    def test_ground_truth_maps_camera_a_to_b(self, tiny_dataset):
        """Test that the pair's ground truth takes camera-A coordinates to camera-B coordinates."""
        pair = sample_pose_pairs(tiny_dataset, "validation", 1, (0.0, 1.0), seed=0)[0]
        world = np.array([0.3, 1.1, 0.7])
        pa, pb = pair.view_a.pose, pair.view_b.pose
        x_a = pa.rotation.T @ (world - pa.translation)
        x_b = pb.rotation.T @ (world - pb.translation)
        gt = pair.ground_truth
        np.testing.assert_allclose(gt.rotation @ x_a + gt.translation, x_b, atol=1e-9)

    def test_thread_count_does_not_matter(self, tiny_dataset):
        """Test that per-pair streams make the benchmark independent of threads."""
        config = tiny_run_config()
        pairs = sample_pose_pairs(tiny_dataset, "validation", 2, (0.0, 1.0), seed=0)
        encoder = random_encoder(config)
        one, summary_one = eval_pose_benchmark(encoder, pairs, config.pose, tiny_dataset.batch_spec, 0, 1)
        two, summary_two = eval_pose_benchmark(encoder, pairs, config.pose, tiny_dataset.batch_spec, 0, 2)
        assert [r.to_row() for r in one] == [r.to_row() for r in two]
        assert summary_one.to_dict() == summary_two.to_dict()

    def test_report(self, tiny_dataset, tmp_path):
        """Test that every pair gets a CSV row."""
        config = tiny_run_config()
        pairs = sample_pose_pairs(tiny_dataset, "validation", 2, (0.0, 1.0), seed=0)
        results, summary = eval_pose_benchmark(random_encoder(config), pairs, config.pose, tiny_dataset.batch_spec)
        write_pose_report(pairs, results, summary, tmp_path)
        rows = pl.read_csv(tmp_path / "pose_pairs.csv")
        assert rows.height == len(pairs)
        assert {"rotation_error_deg", "translation_error_m", "overlap", "success"} <= set(rows.columns)
