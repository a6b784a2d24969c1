"""
Typed run configuration.

Every section is a pydantic model with ``extra="forbid"`` so a misspelled key
fails loudly instead of silently falling back to a default. Defaults are the
desk-scale benchmark values (64x64 views, 8x8 patches, tau=0.01, rho=0.2 m,
kappa=3, Adam lr 1e-4, batches of 16 views).
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class SceneConfig(_Section):
    """Procedural environment generation."""

    num_environments: int = Field(10, ge=2)
    num_validation_environments: int = Field(2, ge=1)
    num_rooms: int = Field(2, ge=1)
    objects_per_room: int = Field(3, ge=0)
    palette_size: int = Field(16, ge=1)
    object_library_size: int = Field(6, ge=1)
    library_seed: int = Field(1234, ge=0)
    room_size_range: tuple[float, float] = (3.0, 4.5)
    room_height: float = Field(2.6, gt=0)
    views_per_environment: int = Field(24, ge=2)
    image_width: int = Field(64, ge=8)
    image_height: int = Field(64, ge=8)
    fov_deg: float = Field(75.0, gt=0, lt=180)
    depth_noise_std: float = Field(0.0, ge=0)
    max_retries: int = Field(200, ge=1)

    @model_validator(mode="after")
    def _check_split(self):
        if self.num_validation_environments >= self.num_environments:
            raise ValueError("num_validation_environments must leave at least one train environment")
        lo, hi = self.room_size_range
        if not (0 < lo <= hi):
            raise ValueError(f"room_size_range must satisfy 0 < lo <= hi, got {self.room_size_range}")
        return self


class DatasetConfig(_Section):
    """Patch extraction."""

    patch_size: int = Field(8, ge=1)
    patch_stride: int | None = Field(None, ge=1)
    normalization: float = Field(255.0, gt=0)


class TrainConfig(_Section):
    """Objective and optimizer hyper-parameters."""

    tau: float = Field(0.01, gt=0)
    rho: float = Field(0.2, gt=0)
    rho_per_landmark: list[float] | None = None
    kappa: float = 3.0
    batch_size: int = Field(16, ge=1)
    views_per_environment: int = Field(8, ge=1)
    landmarks_per_batch: int = Field(64, ge=1)
    epochs: int = Field(20, ge=0)
    steps_per_epoch: int = Field(20, ge=1)
    learning_rate: float = Field(1e-4, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    eps: float = Field(1e-8, gt=0)
    embedding_mode: Literal["single", "mean"] = "single"
    min_positives: int = Field(2, ge=1)
    max_resample_attempts: int = Field(20, ge=1)
    exclude_self_pair: bool = True
    landmark_gradient: bool = True
    hidden_dim: int = Field(128, ge=1)
    embedding_dim: int = Field(64, ge=1)
    activation: Literal["softplus"] = "softplus"
    chunk_rows: int = Field(256, ge=1)
    checkpoint_every: int = Field(1, ge=1)
    validate_every: int = Field(1, ge=0)
    validation_batches: int = Field(2, ge=1)

    @field_validator("kappa")
    @classmethod
    def _kappa_above_one(cls, value: float) -> float:
        if not value > 1:
            raise ValueError(f"kappa must be > 1, got {value}")
        return value

    @field_validator("rho_per_landmark")
    @classmethod
    def _radii_positive(cls, value):
        if value is not None and any(r <= 0 for r in value):
            raise ValueError("rho_per_landmark entries must be positive")
        return value

    @model_validator(mode="after")
    def _check_batch(self):
        if self.batch_size % self.views_per_environment:
            raise ValueError(
                f"batch_size ({self.batch_size}) must be a multiple of "
                f"views_per_environment ({self.views_per_environment})"
            )
        if self.rho_per_landmark is not None and len(self.rho_per_landmark) != self.landmarks_per_batch:
            raise ValueError("rho_per_landmark must have landmarks_per_batch entries")
        return self


class RetrievalEvalConfig(_Section):
    num_batches: int = Field(4, ge=1)
    eval_seed: int = Field(0, ge=0)
    splits: list[Literal["train", "validation"]] = ["train", "validation"]
    top_k: int = Field(8, ge=1)


class SegmentationEvalConfig(_Section):
    label_kinds: list[Literal["semantic", "panoptic"]] = ["semantic", "panoptic"]
    learning_rate: float = Field(1e-2, gt=0)
    max_steps: int = Field(2000, ge=1)
    tolerance: float = Field(1e-7, ge=0)
    max_views_per_environment: int | None = Field(8, ge=1)


class PoseEvalConfig(_Section):
    num_pairs: int = Field(100, ge=1)
    score_threshold: float = Field(0.7, gt=0, lt=1)
    top_k: int = Field(100, ge=8)
    inlier_threshold_px: float = Field(1.0, gt=0)
    max_iterations: int = Field(1000, ge=1)
    confidence: float = Field(0.99, gt=0, lt=1)
    continuity_filter: bool = True
    mutual_best: bool = True
    max_displacement_deviation: float = Field(2.0, gt=0)
    overlap_range: tuple[float, float] = (0.05, 0.4)

    @field_validator("overlap_range")
    @classmethod
    def _ordered(cls, value):
        if not (0 <= value[0] <= value[1] <= 1):
            raise ValueError(f"overlap_range must satisfy 0 <= lo <= hi <= 1, got {value}")
        return value


class CosegConfig(_Section):
    threshold: float = Field(0.7, gt=-1, lt=1)
    num_queries: int = Field(4, ge=1)
    num_views: int = Field(4, ge=1)
    save_overlays: bool = True


class LoggingConfig(_Section):
    level: str = "INFO"
    format: str = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
    file: str | None = None
    progress: bool = True


class RunConfig(_Section):
    """Top-level configuration of one CLI run."""

    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    output_dir: str | None = None
    dataset_dir: str | None = None
    checkpoint: str | None = None
    scene: SceneConfig = Field(default_factory=SceneConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    retrieval: RetrievalEvalConfig = Field(default_factory=RetrievalEvalConfig)
    segmentation: SegmentationEvalConfig = Field(default_factory=SegmentationEvalConfig)
    pose: PoseEvalConfig = Field(default_factory=PoseEvalConfig)
    coseg: CosegConfig = Field(default_factory=CosegConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    @model_validator(mode="after")
    def _patch_grid_fits(self):
        size = self.dataset.patch_size
        if self.scene.image_width % size or self.scene.image_height % size:
            raise ValueError(
                f"patch_size {size} must divide the image size "
                f"{self.scene.image_width}x{self.scene.image_height}"
            )
        return self
