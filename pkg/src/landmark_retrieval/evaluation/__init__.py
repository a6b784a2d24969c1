"""
Downstream evaluations: retrieval AP, co-segmentation, linear-probe
segmentation and relative pose estimation.
"""

from .cosegmentation import CosegResult, cosegment, geometric_agreement, run_coseg, save_overlays
from .matching import MatchSet, cell_centers, continuity_filter, match_embeddings, match_patches, mutual_best
from .pose import (
    PosePair,
    PoseResult,
    PoseSummary,
    decompose_essential,
    eight_point,
    estimate_relative_pose,
    eval_pose_benchmark,
    ransac_essential,
    sample_pose_pairs,
    sampson_distance,
    select_by_chirality,
    summarize_pose_errors,
    write_pose_report,
)
from .retrieval import RetrievalResult, eval_retrieval, mean_top_k_ap, positive_rate, write_retrieval_report
from .segmentation import (
    ProbeState,
    SegMetrics,
    eval_segmentation,
    run_segmentation,
    segmentation_metrics,
    train_probe,
    train_probe_on_features,
    write_segmentation_report,
)

__all__ = [
    "CosegResult",
    "MatchSet",
    "PosePair",
    "PoseResult",
    "PoseSummary",
    "ProbeState",
    "RetrievalResult",
    "SegMetrics",
    "cell_centers",
    "continuity_filter",
    "cosegment",
    "decompose_essential",
    "eight_point",
    "estimate_relative_pose",
    "eval_pose_benchmark",
    "eval_retrieval",
    "mean_top_k_ap",
    "eval_segmentation",
    "geometric_agreement",
    "match_embeddings",
    "match_patches",
    "mutual_best",
    "positive_rate",
    "ransac_essential",
    "run_coseg",
    "run_segmentation",
    "sample_pose_pairs",
    "sampson_distance",
    "save_overlays",
    "segmentation_metrics",
    "select_by_chirality",
    "summarize_pose_errors",
    "train_probe",
    "train_probe_on_features",
    "write_pose_report",
    "write_retrieval_report",
    "write_segmentation_report",
]
