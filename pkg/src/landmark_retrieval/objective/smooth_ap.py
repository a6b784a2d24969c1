"""
Smooth average precision over patch-landmark pairs.

With the score matrix S flattened row-major into one ranking of n*m pairs,
every positive pair q gets the smooth precision

    R_q = (1 + sum_{k in P, k != q} sig((s_k - s_q) / tau))
          / (1 + sum_{k in U, k != q} sig((s_k - s_q) / tau))

where P are the positive pairs and U the universe pairs. The vectorized
objective is the mean of R_q over all positives, the per-landmark value the
mean over the positives of one column. Pairs outside U never enter any sum,
so their scores get exactly zero gradient.

Only the |P| x |U| block of pair interactions is evaluated, in chunks of
positive rows with a fixed chunk order. The result does not depend on the
number of threads.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from ..exceptions import UndefinedAPError
from ..landmarks import MaskPair
from ..utils import ordered_map
from .scores import as_score_array

logger = logging.getLogger(__name__)

DEFAULT_CHUNK_ROWS = 256


@dataclass(frozen=True)
class ObjectiveReport:
    """Values of one objective evaluation (all in [0, 1])."""

    vectorized_ap: float
    per_landmark_ap: np.ndarray
    exact_ap: float
    per_landmark_exact_ap: np.ndarray
    tau: float
    num_positive_pairs: int = 0
    num_universe_pairs: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "vectorized_ap": float(self.vectorized_ap),
            "exact_ap": float(self.exact_ap),
            "tau": float(self.tau),
            "mean_landmark_ap": float(np.nanmean(self.per_landmark_ap)) if self.per_landmark_ap.size else float("nan"),
            "num_positive_pairs": int(self.num_positive_pairs),
            "num_universe_pairs": int(self.num_universe_pairs),
        }


def _check(scores, masks: MaskPair, tau: float | None = None) -> np.ndarray:
    s = as_score_array(scores)
    if s.shape != masks.shape:
        raise ValueError(f"Score shape {s.shape} does not match mask shape {masks.shape}")
    if tau is not None and not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    if not masks.positive.any():
        raise UndefinedAPError("No positive pairs: average precision is undefined")
    return s


def _smooth_terms(
    s: np.ndarray,
    masks: MaskPair,
    tau: float,
    exclude_self_pair: bool = True,
    with_grad: bool = False,
    chunk_rows: int = DEFAULT_CHUNK_ROWS,
    num_threads: int = 1,
):
    """
    Smooth precision R_q of every positive pair (row-major order), and
    optionally d(mean R)/dS.
    """
    flat = s.reshape(-1)
    pos_idx = np.flatnonzero(masks.positive_vector)
    uni_idx = np.flatnonzero(masks.universe_vector)
    pos_in_uni = masks.positive_vector[uni_idx]
    # column of each positive pair inside the universe block
    self_col = np.searchsorted(uni_idx, pos_idx)
    s_uni = flat[uni_idx]
    offset = 0.0 if exclude_self_pair else 0.5

    starts = list(range(0, len(pos_idx), max(1, chunk_rows)))

    def _chunk(start: int):
        rows = slice(start, start + chunk_rows)
        s_q = flat[pos_idx[rows]]
        z = (s_uni[None, :] - s_q[:, None]) / tau
        sig = expit(z)
        # self pair has z == 0 exactly, sig == 0.5
        local = np.arange(len(s_q))
        sig[local, self_col[rows]] = 0.0
        num = 1.0 + offset + sig[:, pos_in_uni].sum(axis=1)
        den = 1.0 + offset + sig.sum(axis=1)
        ratio = num / den
        if not with_grad:
            return ratio, None
        dsig = expit(z) * expit(-z) / tau
        dsig[local, self_col[rows]] = 0.0
        a = dsig * (pos_in_uni[None, :] / den[:, None] - (num / den**2)[:, None])
        return ratio, (a.sum(axis=0), a.sum(axis=1))

    results = ordered_map(_chunk, starts, num_threads)
    ratios = np.concatenate([r for r, _ in results]) if results else np.zeros(0)

    grad = None
    if with_grad:
        p = len(pos_idx)
        grad_uni = np.zeros(len(uni_idx))
        grad_pos = np.zeros(p)
        for start, (_, (col_sum, row_sum)) in zip(starts, results, strict=True):
            grad_uni += col_sum
            grad_pos[start : start + len(row_sum)] -= row_sum
        grad_flat = np.zeros(flat.shape[0])
        grad_flat[uni_idx] += grad_uni / p
        grad_flat[pos_idx] += grad_pos / p
        grad = grad_flat.reshape(s.shape)
    return pos_idx, ratios, grad


def vectorized_smooth_ap(
    scores,
    masks: MaskPair,
    tau: float = 0.01,
    exclude_self_pair: bool = True,
    chunk_rows: int = DEFAULT_CHUNK_ROWS,
    num_threads: int = 1,
) -> float:
    """
    Smooth AP over all n*m pairs stacked into one ranking.

    Raises:
        UndefinedAPError: no positive pair
    """
    s = _check(scores, masks, tau)
    _, ratios, _ = _smooth_terms(s, masks, tau, exclude_self_pair, False, chunk_rows, num_threads)
    return float(ratios.mean())


def vectorized_smooth_ap_with_grad(
    scores,
    masks: MaskPair,
    tau: float = 0.01,
    exclude_self_pair: bool = True,
    chunk_rows: int = DEFAULT_CHUNK_ROWS,
    num_threads: int = 1,
) -> tuple[float, np.ndarray]:
    """Objective value and its (n, m) gradient with respect to the scores."""
    s = _check(scores, masks, tau)
    _, ratios, grad = _smooth_terms(s, masks, tau, exclude_self_pair, True, chunk_rows, num_threads)
    return float(ratios.mean()), grad


def grad_vectorized_smooth_ap(
    scores,
    masks: MaskPair,
    tau: float = 0.01,
    exclude_self_pair: bool = True,
    chunk_rows: int = DEFAULT_CHUNK_ROWS,
    num_threads: int = 1,
) -> np.ndarray:
    """d(vectorized smooth AP)/dS; zero outside the universe mask."""
    return vectorized_smooth_ap_with_grad(scores, masks, tau, exclude_self_pair, chunk_rows, num_threads)[1]


def _per_column_mean(pos_idx: np.ndarray, values: np.ndarray, m: int) -> np.ndarray:
    cols = pos_idx % m
    counts = np.bincount(cols, minlength=m)
    sums = np.bincount(cols, weights=values, minlength=m)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)


def per_landmark_smooth_ap(
    scores,
    masks: MaskPair,
    tau: float = 0.01,
    exclude_self_pair: bool = True,
    chunk_rows: int = DEFAULT_CHUNK_ROWS,
    num_threads: int = 1,
) -> np.ndarray:
    """Smooth AP of every landmark (NaN for landmarks without positives)."""
    s = _check(scores, masks, tau)
    pos_idx, ratios, _ = _smooth_terms(s, masks, tau, exclude_self_pair, False, chunk_rows, num_threads)
    return _per_column_mean(pos_idx, ratios, s.shape[1])


def smooth_ap_per_landmark(
    scores,
    masks: MaskPair,
    tau: float,
    j: int,
    exclude_self_pair: bool = True,
) -> float:
    """
    Smooth AP with landmark j as the query; inner sums run over all pairs.

    Raises:
        UndefinedAPError: landmark j has no positive patch
    """
    if not masks.positive[:, j].any():
        raise UndefinedAPError(f"Landmark {j} has no positive patch")
    return float(per_landmark_smooth_ap(scores, masks, tau, exclude_self_pair)[j])


def _exact_terms(s: np.ndarray, masks: MaskPair) -> tuple[np.ndarray, np.ndarray]:
    flat = s.reshape(-1)
    pos_idx = np.flatnonzero(masks.positive_vector)
    s_pos = flat[pos_idx]
    s_uni = np.sort(flat[masks.universe_vector])
    s_pos_sorted = np.sort(s_pos)

    def _rank(sorted_values: np.ndarray, queries: np.ndarray) -> np.ndarray:
        left = np.searchsorted(sorted_values, queries, side="left")
        right = np.searchsorted(sorted_values, queries, side="right")
        greater = len(sorted_values) - right
        ties = right - left - 1  # minus the query itself
        return greater + 0.5 * ties

    num = 1.0 + _rank(s_pos_sorted, s_pos)
    den = 1.0 + _rank(s_uni, s_pos)
    return pos_idx, num / den


def exact_ap(scores, masks: MaskPair) -> float:
    """
    Average precision of the vectorized ranking restricted to the universe.

    Ties between distinct pairs count one half, matching sig(0) = 0.5.
    """
    s = _check(scores, masks)
    _, ratios = _exact_terms(s, masks)
    return float(ratios.mean())


def per_landmark_exact_ap(scores, masks: MaskPair) -> np.ndarray:
    s = _check(scores, masks)
    pos_idx, ratios = _exact_terms(s, masks)
    return _per_column_mean(pos_idx, ratios, s.shape[1])


def top_k_landmarks(per_landmark_aps, k: int) -> np.ndarray:
    """
    Indices of the k largest per-landmark APs, ties broken by lower index.

    Landmarks with an undefined (NaN) AP rank last.
    """
    aps = np.asarray(per_landmark_aps, dtype=np.float64)
    if not 0 <= k <= aps.shape[0]:
        raise ValueError(f"k must be in [0, {aps.shape[0]}], got {k}")
    keys = np.where(np.isnan(aps), -np.inf, aps)
    return np.argsort(-keys, kind="stable")[:k]


def evaluate_objective(
    scores,
    masks: MaskPair,
    tau: float = 0.01,
    exclude_self_pair: bool = True,
    chunk_rows: int = DEFAULT_CHUNK_ROWS,
    num_threads: int = 1,
) -> ObjectiveReport:
    """Vectorized, per-landmark and exact AP in one pass."""
    s = _check(scores, masks, tau)
    pos_idx, ratios, _ = _smooth_terms(s, masks, tau, exclude_self_pair, False, chunk_rows, num_threads)
    exact_pos, exact_ratios = _exact_terms(s, masks)
    m = s.shape[1]
    return ObjectiveReport(
        vectorized_ap=float(ratios.mean()),
        per_landmark_ap=_per_column_mean(pos_idx, ratios, m),
        exact_ap=float(exact_ratios.mean()),
        per_landmark_exact_ap=_per_column_mean(exact_pos, exact_ratios, m),
        tau=tau,
        num_positive_pairs=int(len(pos_idx)),
        num_universe_pairs=int(masks.universe.sum()),
    )
