"""
Metric and report schemas.

All metric values are validated into [0, 1]; a MetricReport's aggregates
can always be recomputed from its per_image rows (see
src.metrics.aggregate_report).
"""

from typing import List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ConfusionCounts(BaseModel):
    tp: int = Field(..., ge=0)
    fp: int = Field(..., ge=0)
    fn: int = Field(..., ge=0)

    @property
    def empty(self) -> bool:
        return self.tp + self.fp + self.fn == 0


class ImageScore(BaseModel):
    image_id: str
    video_id: str
    iou: float = Field(..., ge=0.0, le=1.0)
    dice: float = Field(..., ge=0.0, le=1.0)


class GroupScore(BaseModel):
    video_id: str
    count: int = Field(..., ge=1)
    mean_iou: float = Field(..., ge=0.0, le=1.0)
    std_iou: float = Field(..., ge=0.0)
    mean_dice: float = Field(..., ge=0.0, le=1.0)
    std_dice: float = Field(..., ge=0.0)


class ReportSettings(BaseModel):
    epsilon: float = 1e-15
    skip_rule: str = "classes absent from both masks are skipped; an all-skipped image scores 1.0"
    std_convention: str = "population"
    averaging: str = "per-image mean"


class MetricReport(BaseModel):
    per_image: List[ImageScore]
    mean_iou: float = Field(..., ge=0.0, le=1.0)
    std_iou: float = Field(..., ge=0.0)
    mean_dice: float = Field(..., ge=0.0, le=1.0)
    std_dice: float = Field(..., ge=0.0)
    groups: List[GroupScore] = Field(default_factory=list, description="Per-video aggregates")
    settings: ReportSettings = Field(default_factory=ReportSettings)
    task: Optional[str] = None
    label: Optional[str] = Field(None, description="e.g. fold-0-of-4, fixed-split, test")


class PredictionRecord(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    image_id: str
    video_id: str
    frame_index: int = 0
    pred_mask: np.ndarray
    gt_mask: Optional[np.ndarray] = None

    @model_validator(mode="after")
    def _check_shapes(self) -> "PredictionRecord":
        if self.gt_mask is not None and self.gt_mask.shape != self.pred_mask.shape:
            raise ValueError(
                f"{self.image_id}: pred {self.pred_mask.shape} and gt {self.gt_mask.shape} differ"
            )
        return self
