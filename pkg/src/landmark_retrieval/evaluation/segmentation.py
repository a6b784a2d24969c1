"""
Linear-probe segmentation on frozen patch features.

A softmax classifier is trained full-batch with Adam on the features of every
training patch (label = majority pixel label of the patch) and evaluated at
pixel level: each patch's class scores are broadcast to its pixels, background
pixels are excluded, and metrics are reported on stuff pixels, thing pixels
and all pixels.

Two label kinds are supported:

- ``semantic``: wall, floor, ceiling, object
- ``panoptic``: wall, floor, ceiling, then one class per object shape
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy.special import log_softmax, softmax
from sklearn.metrics import average_precision_score

from ..data import THING_OFFSET, PatchBatch, SceneDataset
from ..exceptions import ProbeTrainingError
from ..models import OptimizerState, adam_step
from ..scenegen import STUFF_CLASSES, SemanticClass

logger = logging.getLogger(__name__)

LABEL_KINDS = ("semantic", "panoptic")
GROUPS = ("stuff", "things", "overall")


@dataclass
class ProbeState:
    """Linear classifier: logits = features @ weights + bias over ``classes``."""

    weights: np.ndarray  # (c, K)
    bias: np.ndarray  # (K,)
    classes: np.ndarray  # (K,) label ids
    label_kind: str = "semantic"
    losses: list[float] = field(default_factory=list)

    def __post_init__(self):
        if len(self.classes) < 2:
            raise ProbeTrainingError(f"A probe needs at least 2 classes, got {len(self.classes)}")

    def logits(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(features, dtype=np.float64) @ self.weights + self.bias

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        return softmax(self.logits(features), axis=1)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.classes[np.argmax(self.logits(features), axis=1)]

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.weights)) and np.all(np.isfinite(self.bias)))


@dataclass
class GroupMetrics:
    mAP: float
    mIoU: float
    jaccard: float  # TP / (TP + FP + FN)
    jaccard_ratio: float  # TP / (FP + FN), 1.0 when FP + FN = 0
    pixel_accuracy: float
    num_pixels: int
    num_classes: int

    def to_dict(self) -> dict:
        return {k: (float(v) if isinstance(v, float) else int(v)) for k, v in self.__dict__.items()}


@dataclass
class SegMetrics:
    label_kind: str
    groups: dict[str, GroupMetrics]

    def to_dict(self) -> dict:
        return {name: g.to_dict() for name, g in self.groups.items()}


def to_label_kind(panoptic: np.ndarray, label_kind: str) -> np.ndarray:
    """Panoptic labels -> labels of ``label_kind`` (semantic folds all shapes into OBJECT)."""
    panoptic = np.asarray(panoptic, dtype=np.int64)
    if label_kind == "panoptic":
        return panoptic
    if label_kind == "semantic":
        return np.where(panoptic >= THING_OFFSET, int(SemanticClass.OBJECT), panoptic)
    raise ValueError(f"Unknown label kind: {label_kind}")


def is_thing(labels: np.ndarray) -> np.ndarray:
    labels = np.asarray(labels)
    return (labels >= THING_OFFSET) | (labels == SemanticClass.OBJECT)


def is_stuff(labels: np.ndarray) -> np.ndarray:
    return np.isin(labels, [int(c) for c in STUFF_CLASSES])


def patch_labels(batch: PatchBatch, label_kind: str) -> np.ndarray:
    if label_kind == "semantic":
        return np.asarray(batch.semantic, dtype=np.int64)
    return to_label_kind(batch.panoptic, label_kind)


# probe training


def probe_loss_and_grad(
    features: np.ndarray, targets: np.ndarray, weights: np.ndarray, bias: np.ndarray
) -> tuple[float, np.ndarray, np.ndarray]:
    """
    Mean softmax cross-entropy and its gradients.

    Args:
        features: (n, c)
        targets: (n,) class indices in [0, K)
        weights: (c, K)
        bias: (K,)
    """
    n = len(features)
    logits = features @ weights + bias
    log_p = log_softmax(logits, axis=1)
    loss = -float(np.mean(log_p[np.arange(n), targets]))
    delta = np.exp(log_p)
    delta[np.arange(n), targets] -= 1.0
    delta /= n
    return loss, features.T @ delta, delta.sum(axis=0)


def train_probe_on_features(
    features: np.ndarray,
    labels: np.ndarray,
    expected_classes=None,
    learning_rate: float = 1e-2,
    max_steps: int = 2000,
    tolerance: float = 1e-7,
    label_kind: str = "semantic",
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> ProbeState:
    """
    Full-batch Adam on the cross-entropy until the relative loss change falls
    below ``tolerance`` or ``max_steps`` is reached.

    Classes of ``expected_classes`` absent from ``labels`` are dropped with a
    warning. Background (label 0) patches are ignored.

    Raises:
        ProbeTrainingError: fewer than two classes remain
    """
    features = np.asarray(features, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    keep = labels != SemanticClass.BACKGROUND
    features, labels = features[keep], labels[keep]

    classes = np.unique(labels)
    if expected_classes is not None:
        missing = sorted(set(int(c) for c in expected_classes) - set(classes.tolist()))
        if missing:
            logger.warning(f"Classes absent from probe training data, dropped: {missing}")
    if len(classes) < 2:
        raise ProbeTrainingError(f"Probe training data has {len(classes)} class(es); need at least 2")

    targets = np.searchsorted(classes, labels)
    params = {
        "W": np.zeros((features.shape[1], len(classes))),
        "b": np.zeros(len(classes)),
    }
    opt = OptimizerState.zeros_like(params, learning_rate, beta1, beta2, eps)
    losses: list[float] = []
    for step in range(max_steps):
        loss, grad_w, grad_b = probe_loss_and_grad(features, targets, params["W"], params["b"])
        losses.append(loss)
        if step and abs(losses[-2] - loss) <= tolerance * max(abs(losses[-2]), 1e-12):
            break
        params, opt = adam_step(opt, params, {"W": grad_w, "b": grad_b})

    logger.info(
        f"Probe [{label_kind}] trained: {len(classes)} classes, {len(losses)} steps, "
        f"loss {losses[0]:.4f} -> {losses[-1]:.4f}"
    )
    return ProbeState(params["W"], params["b"], classes, label_kind, losses)


def train_probe(
    frozen_encoder,
    batch: PatchBatch,
    label_kind: str = "semantic",
    seg_cfg=None,
    expected_classes=None,
) -> ProbeState:
    """
    Train a probe on the frozen features of ``batch``.

    Args:
        frozen_encoder: Anything with ``encode(batch) -> (n, c)``
        batch: Training patches
        label_kind: ``"semantic"`` or ``"panoptic"``
        seg_cfg: SegmentationEvalConfig (learning rate, step cap, tolerance)
        expected_classes: Classes that should be learnable
    """
    kwargs = {}
    if seg_cfg is not None:
        kwargs = {
            "learning_rate": seg_cfg.learning_rate,
            "max_steps": seg_cfg.max_steps,
            "tolerance": seg_cfg.tolerance,
        }
    return train_probe_on_features(
        frozen_encoder.encode(batch),
        patch_labels(batch, label_kind),
        expected_classes,
        label_kind=label_kind,
        **kwargs,
    )


# metrics


def _class_counts(gt: np.ndarray, pred: np.ndarray, c: int) -> tuple[int, int, int]:
    tp = int(np.sum((gt == c) & (pred == c)))
    fp = int(np.sum((gt != c) & (pred == c)))
    fn = int(np.sum((gt == c) & (pred != c)))
    return tp, fp, fn


def group_metrics(gt: np.ndarray, pred: np.ndarray, scores: np.ndarray, classes: np.ndarray) -> GroupMetrics:
    """
    One-vs-all metrics averaged over the classes present in ``gt``.

    Args:
        gt: (N,) ground-truth labels of the group's pixels
        pred: (N,) predicted labels
        scores: (N, K) class probabilities, columns ordered as ``classes``
        classes: (K,) probe classes
    """
    present = np.unique(gt)
    if len(present) == 0:
        nan = float("nan")
        return GroupMetrics(nan, nan, nan, nan, nan, 0, 0)
    column = {int(c): k for k, c in enumerate(classes)}
    aps, ious, jac_ratio = [], [], []
    for c in present:
        c = int(c)
        truth = gt == c
        if c in column and not truth.all():
            aps.append(float(average_precision_score(truth, scores[:, column[c]])))
        elif c in column:
            aps.append(1.0)
        else:
            aps.append(0.0)
        tp, fp, fn = _class_counts(gt, pred, c)
        ious.append(tp / (tp + fp + fn))
        jac_ratio.append(1.0 if fp + fn == 0 else tp / (fp + fn))
    return GroupMetrics(
        mAP=float(np.mean(aps)),
        mIoU=float(np.mean(ious)),
        jaccard=float(np.mean(ious)),
        jaccard_ratio=float(np.mean(jac_ratio)),
        pixel_accuracy=float(np.mean(gt == pred)),
        num_pixels=int(len(gt)),
        num_classes=int(len(present)),
    )


def segmentation_metrics(
    gt: np.ndarray, pred: np.ndarray, scores: np.ndarray, classes: np.ndarray, label_kind: str = "semantic"
) -> SegMetrics:
    """Stuff, things and overall metrics over labelled (non-background) pixels."""
    gt = np.asarray(gt).reshape(-1)
    pred = np.asarray(pred).reshape(-1)
    scores = np.asarray(scores).reshape(len(gt), -1)
    labelled = gt != SemanticClass.BACKGROUND
    masks = {"stuff": labelled & is_stuff(gt), "things": labelled & is_thing(gt), "overall": labelled}
    return SegMetrics(
        label_kind,
        {name: group_metrics(gt[m], pred[m], scores[m], classes) for name, m in masks.items()},
    )


def pixel_predictions(probe: ProbeState, features: np.ndarray, patch_size: int) -> tuple[np.ndarray, np.ndarray]:
    """Patch predictions broadcast to the P*P pixels of each patch (row-major per patch)."""
    proba = probe.predict_proba(features)
    pred = probe.classes[np.argmax(proba, axis=1)]
    pixels = patch_size * patch_size
    return np.repeat(pred, pixels), np.repeat(proba, pixels, axis=0)


def eval_segmentation(probe: ProbeState, encoder, batch: PatchBatch) -> SegMetrics:
    """Pixel-level metrics of ``probe`` on the patches of ``batch``."""
    pred, scores = pixel_predictions(probe, encoder.encode(batch), batch.patch_size)
    gt = to_label_kind(batch.pixel_labels, probe.label_kind).reshape(-1)
    metrics = segmentation_metrics(gt, pred, scores, probe.classes, probe.label_kind)
    overall = metrics.groups["overall"]
    logger.info(
        f"Segmentation [{probe.label_kind}]: mAP={overall.mAP:.4f}, mIoU={overall.mIoU:.4f}, "
        f"Jaccard={overall.jaccard:.4f} (TP/(FP+FN): {overall.jaccard_ratio:.4f})"
    )
    return metrics


def run_segmentation(
    encoder,
    dataset: SceneDataset,
    seg_cfg,
    train_split: str = "train",
    eval_split: str = "validation",
    num_threads: int = 1,
) -> dict[str, SegMetrics]:
    """Train one probe per label kind on ``train_split`` and evaluate it on ``eval_split``."""
    train_batch = dataset.batch(dataset.all_views(train_split, seg_cfg.max_views_per_environment), num_threads)
    eval_batch = dataset.batch(dataset.all_views(eval_split, seg_cfg.max_views_per_environment), num_threads)
    results = {}
    for kind in seg_cfg.label_kinds:
        expected = np.unique(patch_labels(eval_batch, kind))
        probe = train_probe(encoder, train_batch, kind, seg_cfg, expected[expected != 0])
        results[kind] = eval_segmentation(probe, encoder, eval_batch)
    return results


def write_segmentation_report(results: dict[str, SegMetrics], output_dir: str | Path) -> Path:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / "segmentation_report.yaml"
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump({kind: m.to_dict() for kind, m in results.items()}, f, sort_keys=False)
    logger.info(f"Segmentation report written: {path}")
    return path
