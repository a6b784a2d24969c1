"""
Training loop maximising the vectorized smooth AP.

Each step: sample views -> extract patches -> encode -> sample landmarks
(positions and embeddings) -> build masks -> cosine scores -> objective and
its gradient -> backpropagate through the encoder -> Adam.

Every step draws its randomness from the named stream
``train/epoch/<e>/step/<s>``, so a run resumed from an epoch checkpoint
replays exactly the same batches as an uninterrupted one.
"""

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import polars as pl
from alive_progress import alive_bar

from ..data import PatchBatch, SceneDataset
from ..evaluation.retrieval import eval_retrieval
from ..exceptions import CheckpointError, CorruptedStateError
from ..landmarks import LandmarkSampler, LandmarkSet, build_masks
from ..models import (
    Checkpoint,
    EncoderState,
    MLPEncoder,
    OptimizerState,
    adam_step,
    backward,
    config_hash,
    forward,
    init_encoder,
    load_checkpoint,
    save_checkpoint,
)
from ..objective import cosine_scores, cosine_scores_backward, exact_ap, vectorized_smooth_ap_with_grad
from ..utils import SeedStreams

logger = logging.getLogger(__name__)


@dataclass
class StepResult:
    vectorized_ap: float
    exact_ap: float
    num_patches: int
    num_positive_pairs: int


def objective_and_gradient(
    state: EncoderState,
    batch: PatchBatch,
    landmarks: LandmarkSet,
    train_cfg,
    num_threads: int = 1,
):
    """
    Vectorized smooth AP of ``state`` on fixed landmarks, and its parameter gradient.

    With ``train_cfg.landmark_gradient`` the landmark embeddings are recomputed
    from the current patch embeddings (theta = weights @ phi) and differentiated
    through; otherwise the stored thetas are treated as constants.

    Returns:
        (value, exact AP, parameter gradients of the value, masks)
    """
    embeddings = forward(state, batch.pixels)
    if train_cfg.landmark_gradient:
        landmarks = landmarks.with_thetas(embeddings)
    masks = build_masks(batch, landmarks, train_cfg.kappa)
    scores = cosine_scores(embeddings, landmarks.thetas)
    value, grad_scores = vectorized_smooth_ap_with_grad(
        scores, masks, train_cfg.tau, train_cfg.exclude_self_pair, train_cfg.chunk_rows, num_threads
    )
    grad_e, grad_t = cosine_scores_backward(embeddings, landmarks.thetas, grad_scores)
    if train_cfg.landmark_gradient:
        grad_e = grad_e + landmarks.theta_gradient_to_patches(grad_t)
    grads = backward(state, batch.pixels, grad_e)
    return value, exact_ap(scores, masks), grads, masks


class LandmarkTrainer:
    """
    Owns the encoder and optimizer state of one training run.

    Writes ``metrics.csv`` (one row per step), ``validation.csv`` and
    checkpoints into ``output_dir``.
    """

    def __init__(self, config, dataset: SceneDataset, output_dir: str | Path, num_threads: int | None = None):
        """
        Args:
            config: RunConfig
            dataset: Generated dataset with a train split
            output_dir: Run directory
            num_threads: Worker threads (default: ``config.threads``)
        """
        self.config = config
        self.train_cfg = config.train
        self.dataset = dataset
        self.output_dir = Path(output_dir)
        self.checkpoint_dir = self.output_dir / "checkpoints"
        self.num_threads = num_threads or config.threads
        self.streams = SeedStreams(config.seed)
        self.sampler = LandmarkSampler.from_config(self.train_cfg)

        patch = dataset.batch_spec.patch_size
        sizes = (
            patch * patch * 3,
            self.train_cfg.hidden_dim,
            self.train_cfg.hidden_dim,
            self.train_cfg.embedding_dim,
        )
        self.state = init_encoder(sizes, self.streams.integer_seed("encoder/init"), self.train_cfg.activation)
        self.optimizer = OptimizerState.from_config(self.state.params, self.train_cfg)
        self.epoch = 0
        self.global_step = 0
        self.metrics: list[dict] = []
        self.validation: list[dict] = []
        self.config_hash = self._run_hash()

        logger.info(
            f"LandmarkTrainer initialised: {self.state.parameter_count} parameters, "
            f"tau={self.train_cfg.tau}, rho={self.train_cfg.rho}, kappa={self.train_cfg.kappa}"
        )

    def _run_hash(self) -> str:
        train = self.train_cfg.model_dump()
        for key in ("epochs", "checkpoint_every", "validate_every", "validation_batches"):
            train.pop(key, None)
        return config_hash({"seed": self.config.seed, "train": train, "dataset": self.config.dataset.model_dump()})

    # checkpoints

    def checkpoint(self) -> Checkpoint:
        return Checkpoint(self.state, self.optimizer, self.epoch, self.global_step, self.config_hash)

    def save(self, name: str | None = None) -> Path:
        path = self.checkpoint_dir / (name or f"epoch_{self.epoch:04d}.ckpt")
        save_checkpoint(path, self.checkpoint())
        save_checkpoint(self.checkpoint_dir / "last.ckpt", self.checkpoint())
        return path

    def resume(self, path: str | Path | None = None) -> None:
        """
        Continue from a checkpoint (default: ``checkpoints/last.ckpt``).

        Raises:
            CheckpointError: the checkpoint belongs to a different configuration
        """
        path = Path(path) if path else self.checkpoint_dir / "last.ckpt"
        ckpt = load_checkpoint(path)
        if ckpt.config_hash != self.config_hash:
            raise CheckpointError(
                f"Checkpoint {path} was written by a different configuration "
                f"({ckpt.config_hash} != {self.config_hash})"
            )
        self.state, self.optimizer = ckpt.state, ckpt.optimizer
        self.epoch, self.global_step = ckpt.epoch, ckpt.global_step
        self.metrics = self._read_log("metrics.csv", lambda row: row["epoch"] < self.epoch)
        self.validation = self._read_log("validation.csv", lambda row: row["epoch"] <= self.epoch)
        logger.info(f"Resumed from {path}: epoch {self.epoch}, step {self.global_step}")

    def _read_log(self, name: str, keep) -> list[dict]:
        path = self.output_dir / name
        if not path.exists():
            return []
        return [row for row in pl.read_csv(path).to_dicts() if keep(row)]

    def _write_logs(self) -> None:
        self.output_dir.mkdir(parents=True, exist_ok=True)
        pl.DataFrame(self.metrics, schema=_metrics_schema()).write_csv(self.output_dir / "metrics.csv")
        pl.DataFrame(self.validation, schema=_validation_schema()).write_csv(self.output_dir / "validation.csv")

    # training

    def train_step(self, batch: PatchBatch, rng: np.random.Generator) -> StepResult:
        embeddings = forward(self.state, batch.pixels)
        landmarks = self.sampler.sample(batch, embeddings, rng)
        value, exact, grads, masks = objective_and_gradient(
            self.state, batch, landmarks, self.train_cfg, self.num_threads
        )
        # ascent on the objective = descent on its negation
        descent = {name: -g for name, g in grads.items()}
        params, self.optimizer = adam_step(self.optimizer, self.state.params, descent)
        self.state = self.state.with_params(params)
        if not self.state.is_finite():
            raise CorruptedStateError(f"Encoder parameters became non-finite at step {self.global_step}")
        return StepResult(value, exact, len(batch), int(masks.positive.sum()))

    def validate(self) -> None:
        if not self.dataset.environments("validation"):
            logger.debug("No validation environments: validation skipped")
            return
        encoder = MLPEncoder(self.state)
        eval_cfg = self.config.retrieval.model_copy(update={"num_batches": self.train_cfg.validation_batches})
        result = eval_retrieval(
            encoder, self.dataset, "validation", eval_cfg, self.train_cfg, self.num_threads, "validation"
        )
        self.validation.append(
            {
                "epoch": self.epoch,
                "split": "validation",
                "vectorized_ap": result.vectorized_ap,
                "exact_ap": result.exact_ap,
            }
        )

    def train(self) -> EncoderState:
        """
        Run the remaining epochs.

        Returns:
            The final encoder state (the initial one for zero epochs)
        """
        cfg = self.train_cfg
        remaining = max(cfg.epochs - self.epoch, 0) * cfg.steps_per_epoch
        if self.epoch == 0 and self.global_step == 0:
            self.save("epoch_0000.ckpt")

        with alive_bar(remaining, title="train", disable=not self.config.logging.progress or remaining == 0) as bar:
            while self.epoch < cfg.epochs:
                for step in range(cfg.steps_per_epoch):
                    rng = self.streams.generator(f"train/epoch/{self.epoch}/step/{step}")
                    _, batch = self.dataset.sample_batch(
                        "train", cfg.batch_size, cfg.views_per_environment, rng, self.num_threads
                    )
                    result = self.train_step(batch, rng)
                    self.global_step += 1
                    self.metrics.append(
                        {
                            "step": self.global_step,
                            "epoch": self.epoch,
                            "vectorized_ap": result.vectorized_ap,
                            "exact_ap": result.exact_ap,
                            "tau": cfg.tau,
                        }
                    )
                    bar()

                self.epoch += 1
                recent = self.metrics[-cfg.steps_per_epoch :]
                logger.info(
                    f"Epoch {self.epoch}/{cfg.epochs}: vectorized AP "
                    f"{np.mean([r['vectorized_ap'] for r in recent]):.4f}, "
                    f"AP {np.mean([r['exact_ap'] for r in recent]):.4f}"
                )
                if cfg.validate_every and self.epoch % cfg.validate_every == 0:
                    self.validate()
                if self.epoch % cfg.checkpoint_every == 0 or self.epoch == cfg.epochs:
                    self.save()
                    self._write_logs()

        self._write_logs()
        save_checkpoint(self.checkpoint_dir / "final.ckpt", self.checkpoint())
        return self.state


def _metrics_schema() -> dict:
    return {"step": pl.Int64, "epoch": pl.Int64, "vectorized_ap": pl.Float64, "exact_ap": pl.Float64, "tau": pl.Float64}


def _validation_schema() -> dict:
    return {"epoch": pl.Int64, "split": pl.Utf8, "vectorized_ap": pl.Float64, "exact_ap": pl.Float64}


def train(config, dataset: SceneDataset, output_dir: str | Path, resume: bool = False) -> tuple[EncoderState, list[dict]]:
    """
    Train an encoder and return it with its per-step metrics log.

    Args:
        config: RunConfig
        dataset: Dataset with a train split
        output_dir: Run directory
        resume: Continue from ``output_dir/checkpoints/last.ckpt`` if present
    """
    trainer = LandmarkTrainer(config, dataset, output_dir)
    if resume and (trainer.checkpoint_dir / "last.ckpt").exists():
        trainer.resume()
    state = trainer.train()
    return state, trainer.metrics
