"""
Cosine scores and smooth average precision objectives.
"""

from .scores import ScoreMatrix, cosine_scores, cosine_scores_backward
from .smooth_ap import (
    ObjectiveReport,
    evaluate_objective,
    exact_ap,
    grad_vectorized_smooth_ap,
    per_landmark_exact_ap,
    per_landmark_smooth_ap,
    smooth_ap_per_landmark,
    top_k_landmarks,
    vectorized_smooth_ap,
    vectorized_smooth_ap_with_grad,
)

__all__ = [
    "ObjectiveReport",
    "ScoreMatrix",
    "cosine_scores",
    "cosine_scores_backward",
    "evaluate_objective",
    "exact_ap",
    "grad_vectorized_smooth_ap",
    "per_landmark_exact_ap",
    "per_landmark_smooth_ap",
    "smooth_ap_per_landmark",
    "top_k_landmarks",
    "vectorized_smooth_ap",
    "vectorized_smooth_ap_with_grad",
]
