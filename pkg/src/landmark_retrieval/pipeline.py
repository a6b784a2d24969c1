"""
Run orchestration behind the CLI commands.

Every command writes into its run directory a snapshot of the effective
configuration (``config.yaml``) and of the software versions and seeds
(``versions.yaml``). Datasets are only ever read after ``generate``.
"""

import logging
import platform
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import RunConfig, get_config_manager, get_output_root
from .data import SceneDataset, generate_dataset
from .evaluation import (
    eval_pose_benchmark,
    eval_retrieval,
    run_coseg,
    run_segmentation,
    sample_pose_pairs,
    write_pose_report,
    write_retrieval_report,
    write_segmentation_report,
)
from .exceptions import CheckpointError, ConfigError
from .models import FrozenRandomEncoder, MLPEncoder, NoiseEncoder, load_checkpoint
from .training import LandmarkTrainer

logger = logging.getLogger(__name__)

EVAL_KINDS = ("retrieval", "segment", "pose", "coseg")
ENCODER_KINDS = ("trained", "random", "noise")


def run_directory(config: RunConfig, command: str) -> Path:
    """``config.output_dir``, or ``<LANDMARK_OUTPUT_ROOT>/<command>``."""
    return Path(config.output_dir) if config.output_dir else get_output_root() / command


def write_run_metadata(config: RunConfig, run_dir: Path, command: str) -> None:
    run_dir.mkdir(parents=True, exist_ok=True)
    get_config_manager().save_config(run_dir / "config.yaml", config)
    versions = {
        "command": command,
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seed": config.seed,
        "threads": config.threads,
    }
    with open(run_dir / "versions.yaml", "w", encoding="utf-8") as f:
        yaml.safe_dump(versions, f, sort_keys=False)


def _open_dataset(config: RunConfig, run_dir: Path) -> SceneDataset:
    if not config.dataset_dir:
        raise ConfigError("dataset_dir is required (use --dataset)")
    if Path(config.dataset_dir).resolve() == run_dir.resolve():
        raise ConfigError("The run directory must differ from the dataset directory")
    return SceneDataset(config.dataset_dir)


def cmd_generate(config: RunConfig) -> Path:
    """Generate the synthetic dataset into ``dataset_dir`` (default: the run directory)."""
    run_dir = run_directory(config, "generate")
    dataset_dir = Path(config.dataset_dir) if config.dataset_dir else run_dir
    write_run_metadata(config, run_dir, "generate")
    generate_dataset(dataset_dir, config, config.threads)
    return dataset_dir


def cmd_train(config: RunConfig, resume: bool = False) -> Path:
    """Train an encoder; checkpoints and logs go to the run directory."""
    run_dir = run_directory(config, "train")
    dataset = _open_dataset(config, run_dir)
    write_run_metadata(config, run_dir, "train")
    trainer = LandmarkTrainer(config, dataset, run_dir)
    if resume:
        last = trainer.checkpoint_dir / "last.ckpt"
        if last.exists():
            trainer.resume(last)
        else:
            logger.warning(f"No checkpoint at {last}: starting from scratch")
    trainer.train()
    return run_dir


def load_encoder(config: RunConfig, kind: str = "trained"):
    """
    The encoder to evaluate.

    Args:
        config: Run configuration (checkpoint path, encoder sizes, seed)
        kind: ``trained`` (from the checkpoint), ``random`` (untrained network)
            or ``noise`` (content-independent embeddings)

    Raises:
        CheckpointError: ``trained`` without an existing checkpoint
    """
    if kind == "trained":
        if not config.checkpoint:
            raise CheckpointError("A checkpoint is required (use --checkpoint)")
        return MLPEncoder(load_checkpoint(config.checkpoint).state)
    train = config.train
    if kind == "random":
        patch = config.dataset.patch_size
        sizes = (patch * patch * 3, train.hidden_dim, train.hidden_dim, train.embedding_dim)
        return FrozenRandomEncoder(sizes, config.seed)
    if kind == "noise":
        return NoiseEncoder(train.embedding_dim, config.seed)
    raise ConfigError(f"Unknown encoder kind {kind!r}; expected one of {ENCODER_KINDS}")


def cmd_eval(config: RunConfig, which: str, encoder_kind: str = "trained") -> Path:
    """
    Run one evaluation and write its report.

    Args:
        config: Run configuration
        which: ``retrieval``, ``segment``, ``pose`` or ``coseg``
        encoder_kind: See ``load_encoder``

    Returns:
        The report path
    """
    if which not in EVAL_KINDS:
        raise ConfigError(f"Unknown evaluation {which!r}; expected one of {EVAL_KINDS}")
    encoder = load_encoder(config, encoder_kind)
    run_dir = run_directory(config, f"eval-{which}")
    dataset = _open_dataset(config, run_dir)
    write_run_metadata(config, run_dir, f"eval-{which}")
    threads = config.threads

    if which == "retrieval":
        results = [
            eval_retrieval(encoder, dataset, split, config.retrieval, config.train, threads)
            for split in config.retrieval.splits
            if dataset.environments(split)
        ]
        return write_retrieval_report(results, run_dir)

    if which == "segment":
        results = run_segmentation(encoder, dataset, config.segmentation, num_threads=threads)
        return write_segmentation_report(results, run_dir)

    if which == "pose":
        pose_cfg = config.pose
        pairs = sample_pose_pairs(
            dataset, "validation", pose_cfg.num_pairs, pose_cfg.overlap_range, config.seed, dataset.batch_spec.patch_size
        )
        results, summary = eval_pose_benchmark(
            encoder, pairs, pose_cfg, dataset.batch_spec, config.seed, threads, config.logging.progress
        )
        return write_pose_report(pairs, results, summary, run_dir)

    run_coseg(encoder, dataset, config.coseg, config.train.rho, run_dir, config.seed)
    return run_dir / "coseg_report.yaml"
