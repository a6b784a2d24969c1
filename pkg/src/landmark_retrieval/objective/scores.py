"""
Cosine scores between patch embeddings and landmark embeddings.
"""

from dataclasses import dataclass

import numpy as np

from ..exceptions import ZeroNormError

SCORE_TOL = 1e-9


@dataclass(frozen=True)
class ScoreMatrix:
    """n x m matrix of cosine scores s_ij."""

    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError(f"Score matrix must be 2-D, got shape {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("Score matrix contains non-finite values")
        if values.size and np.abs(values).max() > 1.0 + SCORE_TOL:
            raise ValueError(f"Cosine scores out of range: max |s| = {np.abs(values).max()}")
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def as_score_array(scores) -> np.ndarray:
    if isinstance(scores, ScoreMatrix):
        return scores.values
    return np.asarray(scores, dtype=np.float64)


def _unit_rows(x: np.ndarray, what: str) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(x, axis=1)
    dead = np.flatnonzero(norms == 0)
    if len(dead):
        raise ZeroNormError(f"{len(dead)} {what} rows have zero norm (first: {int(dead[0])})")
    return x / norms[:, None], norms


def cosine_scores(embeddings: np.ndarray, thetas: np.ndarray) -> ScoreMatrix:
    """
    s_ij = phi_i . theta_j / (|phi_i| |theta_j|).

    Args:
        embeddings: (n, c) patch embeddings
        thetas: (m, c) landmark embeddings

    Raises:
        ZeroNormError: any row of either input has zero norm
    """
    unit_e, _ = _unit_rows(np.asarray(embeddings, dtype=np.float64), "embedding")
    unit_t, _ = _unit_rows(np.asarray(thetas, dtype=np.float64), "landmark")
    return ScoreMatrix(unit_e @ unit_t.T)


def cosine_scores_backward(
    embeddings: np.ndarray, thetas: np.ndarray, grad_scores: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """
    Chain dL/dS into dL/d(embeddings) and dL/d(thetas).

    Returns:
        (n, c) and (m, c) gradients
    """
    unit_e, norm_e = _unit_rows(np.asarray(embeddings, dtype=np.float64), "embedding")
    unit_t, norm_t = _unit_rows(np.asarray(thetas, dtype=np.float64), "landmark")
    grad_scores = np.asarray(grad_scores, dtype=np.float64)
    scores = unit_e @ unit_t.T
    weighted = grad_scores * scores
    grad_e = (grad_scores @ unit_t - weighted.sum(axis=1)[:, None] * unit_e) / norm_e[:, None]
    grad_t = (grad_scores.T @ unit_e - weighted.sum(axis=0)[:, None] * unit_t) / norm_t[:, None]
    return grad_e, grad_t
