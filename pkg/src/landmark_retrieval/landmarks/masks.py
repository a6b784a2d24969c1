"""
Positive and universe masks over patch-landmark pairs.

    y+_ij = 1  iff  e_i == eps_j  and  |p_i - l_j| <= rho_j
    yU_ij = 1  iff  e_i == eps_j  and  |p_i - l_j| <= kappa * rho_j

Pairs outside the universe (farther than kappa * rho_j, or in another
environment) are don't-care pairs: the objective ignores them.
"""

import logging
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

MASK_MAGIC = b"LMRKMASK"


@dataclass(frozen=True)
class MaskPair:
    positive: np.ndarray  # (n, m) bool
    universe: np.ndarray  # (n, m) bool
    kappa: float

    def __post_init__(self):
        if self.positive.shape != self.universe.shape:
            raise ValueError(f"Mask shapes differ: {self.positive.shape} vs {self.universe.shape}")
        if np.any(self.positive & ~self.universe):
            raise ValueError("Positive mask is not contained in the universe mask")

    @property
    def shape(self) -> tuple[int, int]:
        return self.positive.shape

    @property
    def positive_vector(self) -> np.ndarray:
        """Row-major vectorisation (index i * m + j)."""
        return self.positive.reshape(-1)

    @property
    def universe_vector(self) -> np.ndarray:
        return self.universe.reshape(-1)

    @property
    def positive_counts(self) -> np.ndarray:
        return self.positive.sum(axis=0)

    def subset_landmarks(self, indices) -> "MaskPair":
        indices = np.asarray(indices)
        return MaskPair(self.positive[:, indices], self.universe[:, indices], self.kappa)

    def dump(self, path: str | Path) -> Path:
        """Debug dump: magic, n, m (u4), kappa (f8), then both masks as u8, little-endian."""
        path = Path(path)
        n, m = self.shape
        with open(path, "wb") as f:
            f.write(MASK_MAGIC)
            f.write(struct.pack("<IId", n, m, self.kappa))
            f.write(self.positive.astype("u1").tobytes())
            f.write(self.universe.astype("u1").tobytes())
        logger.debug(f"Masks {n}x{m} dumped to {path}")
        return path

    @classmethod
    def load(cls, path: str | Path) -> "MaskPair":
        data = Path(path).read_bytes()
        if data[: len(MASK_MAGIC)] != MASK_MAGIC:
            raise ValueError(f"{path} is not a mask dump")
        offset = len(MASK_MAGIC)
        n, m, kappa = struct.unpack_from("<IId", data, offset)
        offset += struct.calcsize("<IId")
        size = n * m
        positive = np.frombuffer(data, dtype="u1", count=size, offset=offset).reshape(n, m).astype(bool)
        universe = np.frombuffer(data, dtype="u1", count=size, offset=offset + size).reshape(n, m).astype(bool)
        return cls(positive, universe, kappa)


def build_masks_from_arrays(
    points: np.ndarray,
    envs: np.ndarray,
    landmark_positions: np.ndarray,
    landmark_envs: np.ndarray,
    rhos,
    kappa: float = 3.0,
) -> MaskPair:
    """
    Brute-force O(nm) mask construction.

    Args:
        points: (n, 3) patch world points p_i
        envs: (n,) patch environments e_i
        landmark_positions: (m, 3) landmark positions l_j
        landmark_envs: (m,) landmark environments eps_j
        rhos: scalar or (m,) radii rho_j
        kappa: Universe multiplier, > 1 (``inf`` disables the don't-care shell)

    Returns:
        MaskPair with boundary distances counted as inside (<=)
    """
    if not kappa > 1:
        raise ValueError(f"kappa must be > 1, got {kappa}")
    points = np.asarray(points, dtype=np.float64)
    landmark_positions = np.asarray(landmark_positions, dtype=np.float64)
    rhos = np.broadcast_to(np.asarray(rhos, dtype=np.float64), (landmark_positions.shape[0],))

    dist = np.linalg.norm(points[:, None, :] - landmark_positions[None, :, :], axis=-1)
    same_env = np.asarray(envs)[:, None] == np.asarray(landmark_envs)[None, :]
    positive = same_env & (dist <= rhos[None, :])
    universe = same_env & (dist <= kappa * rhos[None, :]) if math.isfinite(kappa) else same_env.copy()
    return MaskPair(positive, universe, float(kappa))


def build_masks(batch, landmarks, kappa: float = 3.0) -> MaskPair:
    """Masks between a ``PatchBatch`` and a ``LandmarkSet``."""
    return build_masks_from_arrays(batch.points, batch.env, landmarks.positions, landmarks.envs, landmarks.rhos, kappa)
