"""
Tentative landmark sampling.

Positions are drawn uniformly among the patches of a batch, so landmarks
are distributed proportionally to how often a place is seen. The embedding
of a landmark is the encoder output of one random positive patch, or
(``mode="mean"``) the average over the positive set divided by the batch
size.
"""

import logging
from dataclasses import dataclass

import numpy as np

from ..data import PatchBatch
from ..exceptions import EmptyPositiveSetError
from ..geometry import WorldPoint

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TentativeLandmark:
    """(theta_j, epsilon_j, l_j) plus the radius rho_j."""

    position: WorldPoint
    theta: np.ndarray
    rho: float
    source: int = -1  # patch index supplying theta in single mode

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError(f"Landmark radius must be positive, got {self.rho}")
        if not np.linalg.norm(self.theta) > 0:
            raise ValueError("Landmark embedding must have non-zero norm")

    @property
    def environment(self) -> int:
        return self.position.environment


@dataclass(frozen=True)
class LandmarkSet:
    """
    m landmarks in array form.

    ``weights`` is the (m, n) matrix with ``thetas = weights @ embeddings``,
    used to send gradients of the landmark embeddings back to the patches.
    """

    positions: np.ndarray  # (m, 3)
    envs: np.ndarray  # (m,)
    rhos: np.ndarray  # (m,)
    thetas: np.ndarray  # (m, c)
    weights: np.ndarray  # (m, n)
    sources: np.ndarray  # (m,), -1 in mean mode

    def __len__(self) -> int:
        return int(self.envs.shape[0])

    def __getitem__(self, j: int) -> TentativeLandmark:
        return TentativeLandmark(
            position=WorldPoint(self.positions[j], int(self.envs[j])),
            theta=self.thetas[j],
            rho=float(self.rhos[j]),
            source=int(self.sources[j]),
        )

    def theta_gradient_to_patches(self, grad_thetas: np.ndarray) -> np.ndarray:
        """(m, c) gradient w.r.t. thetas -> (n, c) gradient w.r.t. patch embeddings."""
        return self.weights.T @ grad_thetas

    def with_thetas(self, embeddings: np.ndarray) -> "LandmarkSet":
        """Same landmarks, thetas recomputed from new patch embeddings."""
        return LandmarkSet(
            self.positions, self.envs, self.rhos, self.weights @ embeddings, self.weights, self.sources
        )

    def subset(self, indices) -> "LandmarkSet":
        indices = np.asarray(indices)
        return LandmarkSet(
            self.positions[indices],
            self.envs[indices],
            self.rhos[indices],
            self.thetas[indices],
            self.weights[indices],
            self.sources[indices],
        )

    @classmethod
    def from_landmarks(cls, landmarks: list[TentativeLandmark], n: int = 0) -> "LandmarkSet":
        weights = np.zeros((len(landmarks), n))
        for j, lm in enumerate(landmarks):
            if 0 <= lm.source < n:
                weights[j, lm.source] = 1.0
        return cls(
            positions=np.stack([lm.position.xyz for lm in landmarks]),
            envs=np.array([lm.environment for lm in landmarks], dtype=np.int64),
            rhos=np.array([lm.rho for lm in landmarks], dtype=np.float64),
            thetas=np.stack([lm.theta for lm in landmarks]),
            weights=weights,
            sources=np.array([lm.source for lm in landmarks], dtype=np.int64),
        )


def positive_indices(batch: PatchBatch, position: WorldPoint, rho: float) -> np.ndarray:
    """Patches with the landmark's environment within ``rho`` of its position."""
    same_env = batch.env == position.environment
    close = np.linalg.norm(batch.points - position.xyz, axis=1) <= rho
    return np.flatnonzero(same_env & close)


def sample_landmark_positions(
    batch: PatchBatch,
    m: int,
    seed: int | np.random.Generator,
    rho: float = 0.2,
    rho_per_landmark=None,
) -> list[tuple[WorldPoint, float]]:
    """
    Draw m landmark positions uniformly among the batch's patches (with replacement).

    Args:
        batch: Non-empty patch batch
        m: Number of landmarks (>= 1)
        seed: Seed or generator
        rho: Radius shared by all landmarks
        rho_per_landmark: Optional per-landmark radii (length m)

    Returns:
        (position, radius) pairs
    """
    if len(batch) == 0:
        raise ValueError("Cannot sample landmarks from an empty batch")
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    radii = np.full(m, rho, dtype=np.float64) if rho_per_landmark is None else np.asarray(rho_per_landmark, float)
    indices = rng.integers(len(batch), size=m)
    return [
        (WorldPoint(batch.points[i], int(batch.env[i])), float(radii[j]))
        for j, i in enumerate(indices)
    ]


def sample_landmark_embedding(
    position: WorldPoint,
    rho: float,
    batch: PatchBatch,
    embeddings: np.ndarray,
    rng: np.random.Generator,
    mode: str = "single",
) -> tuple[np.ndarray, np.ndarray]:
    """
    Embedding theta_j of a landmark.

    Args:
        position: Landmark position
        rho: Landmark radius
        batch: Patches the embeddings belong to
        embeddings: (n, c) encoder outputs
        rng: Generator for the positive pick
        mode: ``"single"`` (one random positive) or ``"mean"`` (sum of positives / n)

    Returns:
        (theta, weights) with ``theta == weights @ embeddings``

    Raises:
        EmptyPositiveSetError: no patch lies inside the landmark's sphere
    """
    positives = positive_indices(batch, position, rho)
    if len(positives) == 0:
        raise EmptyPositiveSetError(
            f"No positive patch within {rho} m of {position.xyz} in environment {position.environment}"
        )
    weights = np.zeros(len(batch))
    if mode == "single":
        weights[positives[rng.integers(len(positives))]] = 1.0
    elif mode == "mean":
        weights[positives] = 1.0 / len(batch)
    else:
        raise ValueError(f"Unknown embedding mode: {mode}")
    return weights @ embeddings, weights


class LandmarkSampler:
    """
    Positions, minimum-positive-set rule and embeddings in one place.

    A drawn position whose sphere holds fewer than ``min_positives`` patches
    is redrawn, up to ``max_resample_attempts`` times; the last draw is then
    kept with a warning.
    """

    def __init__(
        self,
        num_landmarks: int = 64,
        rho: float = 0.2,
        mode: str = "single",
        min_positives: int = 2,
        max_resample_attempts: int = 20,
        rho_per_landmark=None,
    ):
        self.num_landmarks = num_landmarks
        self.rho = rho
        self.mode = mode
        self.min_positives = min_positives
        self.max_resample_attempts = max_resample_attempts
        self.rho_per_landmark = rho_per_landmark

    @classmethod
    def from_config(cls, train_cfg) -> "LandmarkSampler":
        return cls(
            num_landmarks=train_cfg.landmarks_per_batch,
            rho=train_cfg.rho,
            mode=train_cfg.embedding_mode,
            min_positives=train_cfg.min_positives,
            max_resample_attempts=train_cfg.max_resample_attempts,
            rho_per_landmark=train_cfg.rho_per_landmark,
        )

    def radius(self, j: int) -> float:
        return float(self.rho if self.rho_per_landmark is None else self.rho_per_landmark[j])

    def sample(self, batch: PatchBatch, embeddings: np.ndarray, rng: np.random.Generator) -> LandmarkSet:
        """
        Args:
            batch: Patch batch
            embeddings: (n, c) patch embeddings
            rng: Generator (positions, then positive picks)

        Returns:
            LandmarkSet of ``num_landmarks`` landmarks
        """
        n = len(batch)
        positions, envs, rhos, thetas, weights, sources = [], [], [], [], [], []
        exhausted = 0
        for j in range(self.num_landmarks):
            rho = self.radius(j)
            for _ in range(self.max_resample_attempts):
                (position, _), = sample_landmark_positions(batch, 1, rng, rho)
                if len(positive_indices(batch, position, rho)) >= self.min_positives:
                    break
            else:
                exhausted += 1
            theta, w = sample_landmark_embedding(position, rho, batch, embeddings, rng, self.mode)
            positions.append(position.xyz)
            envs.append(position.environment)
            rhos.append(rho)
            thetas.append(theta)
            weights.append(w)
            sources.append(int(np.argmax(w)) if self.mode == "single" else -1)

        if exhausted:
            logger.warning(
                f"{exhausted}/{self.num_landmarks} landmarks kept with fewer than "
                f"{self.min_positives} positives after {self.max_resample_attempts} draws"
            )
        return LandmarkSet(
            positions=np.stack(positions),
            envs=np.asarray(envs, dtype=np.int64),
            rhos=np.asarray(rhos, dtype=np.float64),
            thetas=np.stack(thetas),
            weights=np.stack(weights) if n else np.zeros((self.num_landmarks, 0)),
            sources=np.asarray(sources, dtype=np.int64),
        )
