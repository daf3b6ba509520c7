"""
Schemas for samples, dataset indexes, folds, augmentation and synthetic data.

RawSample holds numpy arrays (8-bit HWC image, 8-bit HW raw mask) so it
allows arbitrary types; everything else is plain JSON-serializable config.
"""

from pathlib import Path
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .task_schemas import TaskKind


class RawSample(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    image: np.ndarray = Field(..., description="uint8 RGB array [H, W, 3]")
    raw_mask: Optional[np.ndarray] = Field(None, description="uint8 array [H, W] with dataset label values")
    video_id: str
    frame_index: int = Field(..., ge=0)

    @model_validator(mode="after")
    def _check_arrays(self) -> "RawSample":
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise ValueError(f"image must be [H, W, 3], got shape {self.image.shape}")
        if self.image.dtype != np.uint8:
            raise ValueError(f"image must be uint8, got {self.image.dtype}")
        if self.raw_mask is not None and self.raw_mask.shape != self.image.shape[:2]:
            raise ValueError(
                f"image {self.image.shape[:2]} and raw_mask {self.raw_mask.shape} differ in size"
            )
        return self

    @property
    def sample_id(self) -> str:
        return f"{self.video_id}/frame{self.frame_index:03d}"


class ChannelStats(BaseModel):
    mean: Tuple[float, float, float] = Field(..., description="Per-channel mean of image/255")
    std: Tuple[float, float, float] = Field((1.0, 1.0, 1.0), description="Per-channel std; 1 disables division")

    @field_validator("mean")
    @classmethod
    def _mean_in_unit_range(cls, v):
        if any(not (0.0 <= m <= 1.0) for m in v):
            raise ValueError(f"channel means must lie in [0, 1], got {v}")
        return v

    @field_validator("std")
    @classmethod
    def _std_positive(cls, v):
        if any(not (s > 0.0) for s in v):
            raise ValueError(f"channel stds must be positive, got {v}")
        return v


# ---------------------------------------------------------------------------
# Dataset index
# ---------------------------------------------------------------------------
class SampleRef(BaseModel):
    video_id: str
    frame_index: int = Field(..., ge=0)
    image_path: Path
    mask_path: Optional[Path] = Field(None, description="None only in predict-only mode")

    @property
    def sample_id(self) -> str:
        return f"{self.video_id}/frame{self.frame_index:03d}"


class DatasetIndex(BaseModel):
    root: Path
    task: TaskKind
    samples: List[SampleRef] = Field(default_factory=list)

    @property
    def video_ids(self) -> List[str]:
        return sorted({s.video_id for s in self.samples})

    def counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for s in self.samples:
            out[s.video_id] = out.get(s.video_id, 0) + 1
        return dict(sorted(out.items()))

    def select(self, video_ids: List[str]) -> List[SampleRef]:
        wanted = set(video_ids)
        return [s for s in self.samples if s.video_id in wanted]


class FoldSplit(BaseModel):
    k: int = Field(..., ge=2)
    fold_index: int = Field(..., ge=0)
    assignments: Dict[str, int] = Field(..., description="video_id -> fold index")

    @model_validator(mode="after")
    def _check_fold(self) -> "FoldSplit":
        if self.fold_index >= self.k:
            raise ValueError(f"fold_index {self.fold_index} must be < k={self.k}")
        return self

    @property
    def val_videos(self) -> List[str]:
        return sorted(v for v, f in self.assignments.items() if f == self.fold_index)

    @property
    def train_videos(self) -> List[str]:
        return sorted(v for v, f in self.assignments.items() if f != self.fold_index)

    @property
    def label(self) -> str:
        return f"fold-{self.fold_index}-of-{self.k}"


# ---------------------------------------------------------------------------
# Augmentation steps (config) and the transforms they resolve to (record)
# ---------------------------------------------------------------------------
class PadIfNeeded(BaseModel):
    op: Literal["pad_if_needed"] = "pad_if_needed"
    min_height: int = Field(..., ge=1)
    min_width: int = Field(..., ge=1)


class RandomCrop(BaseModel):
    op: Literal["random_crop"] = "random_crop"
    height: int = Field(..., ge=1)
    width: int = Field(..., ge=1)


class HorizontalFlip(BaseModel):
    op: Literal["hflip"] = "hflip"
    p: float = Field(0.5, ge=0.0, le=1.0)


class VerticalFlip(BaseModel):
    op: Literal["vflip"] = "vflip"
    p: float = Field(0.5, ge=0.0, le=1.0)


AugmentStep = Annotated[
    Union[PadIfNeeded, RandomCrop, HorizontalFlip, VerticalFlip],
    Field(discriminator="op"),
]


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------
class SynthSpec(BaseModel):
    num_images: int = Field(..., ge=1)
    height: int = Field(256, ge=32)
    width: int = Field(320, ge=32)
    instruments_per_image: Tuple[int, int] = Field((1, 3), description="Inclusive range")
    seed: int = 0
    task: TaskKind = "binary"
    num_videos: int = Field(8, ge=1, description="Images are spread round-robin over this many videos")
    include_probe: bool = Field(False, description="Also draw probe shapes (raw parts value 40)")

    @model_validator(mode="after")
    def _check_sizes(self) -> "SynthSpec":
        if self.height % 32 or self.width % 32:
            raise ValueError(f"height and width must be divisible by 32, got {self.height}x{self.width}")
        lo, hi = self.instruments_per_image
        if lo < 0 or hi < lo:
            raise ValueError(f"instruments_per_image must be a range lo<=hi, got {self.instruments_per_image}")
        return self
