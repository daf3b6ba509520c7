"""
Training configuration and history schemas.

Protocol defaults: AdamW at lr 1e-4 with betas (0.9, 0.999) and weight
decay 1e-2, 100 epochs, batch size 2, 4-fold cross-validation by video.
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, model_validator

from .data_schemas import AugmentStep, HorizontalFlip, VerticalFlip
from .model_schemas import ModelConfig
from .task_schemas import LossConfig, TaskKind


SplitMode = Literal["kfold", "fixed"]
Device = Literal["cpu", "cuda", "auto"]


def _default_augment() -> list:
    return [HorizontalFlip(), VerticalFlip()]


class TrainConfig(BaseModel):
    task: TaskKind = "binary"
    model: Optional[ModelConfig] = Field(
        None, description="Explicit architecture; None builds the default schedule for the task"
    )
    model_width: float = Field(1.0, gt=0.0, le=1.0, description="Channel multiplier for the default schedule")

    # Optimizer
    optimizer: Literal["adamw"] = "adamw"
    learning_rate: float = Field(1e-4, gt=0.0)
    betas: Tuple[float, float] = (0.9, 0.999)
    weight_decay: float = Field(1e-2, ge=0.0)
    grad_clip_norm: Optional[float] = Field(None, gt=0.0, description="Max gradient norm; None disables clipping")

    # Schedule
    epochs: int = Field(100, ge=1)
    batch_size: int = Field(2, ge=1)
    validate_every: int = Field(1, ge=1, description="Run validation every N epochs (and always on the last)")

    # Split
    split_mode: SplitMode = "kfold"
    k: int = Field(4, ge=2)
    fold_index: int = Field(0, ge=0)
    val_videos: List[str] = Field(default_factory=list, description="Validation videos for split_mode=fixed")

    # Data
    augment: List[AugmentStep] = Field(default_factory=_default_augment)
    normalize_std: bool = Field(False, description="Also divide by the channel std after mean subtraction")
    strict_labels: bool = Field(True, description="Unknown raw mask values raise instead of mapping to background")
    num_workers: int = Field(0, ge=0)

    # Loss
    loss: LossConfig = Field(default_factory=LossConfig)
    include_background_in_jaccard: bool = False

    # Run
    data_root: Path = Field(Path("data/endovis17"), description="Dataset root in the EndoVis layout")
    seed: int = 0
    device: Device = "cpu"
    checkpoint_dir: Path = Path("runs/default")
    resume_from: Optional[Path] = None

    @model_validator(mode="after")
    def _check_fold(self) -> "TrainConfig":
        if self.split_mode == "kfold" and self.fold_index >= self.k:
            raise ValueError(f"fold_index {self.fold_index} must be < k={self.k}")
        return self


class EpochRecord(BaseModel):
    epoch: int = Field(..., ge=0)
    train_loss: float
    val_iou: Optional[float] = Field(None, ge=0.0, le=1.0)
    val_dice: Optional[float] = Field(None, ge=0.0, le=1.0)
    wall_seconds: float = Field(0.0, ge=0.0)


class TrainHistory(BaseModel):
    records: List[EpochRecord] = Field(default_factory=list)
    best_epoch: Optional[int] = None
    metadata: Dict[str, Any] = Field(
        default_factory=dict,
        description="Optimizer hyperparameters, channel stats, task kind and split label",
    )

    @model_validator(mode="after")
    def _check_epochs(self) -> "TrainHistory":
        epochs = [r.epoch for r in self.records]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError(f"epoch numbering must be strictly increasing, got {epochs}")
        return self

    def append(self, record: EpochRecord) -> None:
        if self.records and record.epoch <= self.records[-1].epoch:
            raise ValueError(f"epoch {record.epoch} does not follow {self.records[-1].epoch}")
        self.records.append(record)
        self.best_epoch = self.select_best()

    def select_best(self) -> Optional[int]:
        """Epoch with the highest val_iou (earliest on ties); last epoch when nothing was validated."""
        validated = [r for r in self.records if r.val_iou is not None]
        if validated:
            return max(validated, key=lambda r: (r.val_iou, -r.epoch)).epoch
        return self.records[-1].epoch if self.records else None

    def best_record(self) -> Optional[EpochRecord]:
        for r in self.records:
            if r.epoch == self.best_epoch:
                return r
        return None

    @property
    def next_epoch(self) -> int:
        return self.records[-1].epoch + 1 if self.records else 0
