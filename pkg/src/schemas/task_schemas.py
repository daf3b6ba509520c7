"""
Task, loss and label-mapping schemas.

The three EndoVis sub-tasks share one network; only the head width, the
base loss H and the raw-label mapping change between them.
"""

from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, Field, model_validator


TaskKind = Literal["binary", "parts", "type"]
BaseLoss = Literal["bce_logits", "cross_entropy"]

# Output channels per task. Binary uses a single logit with a logistic link.
TASK_NUM_CLASSES: Dict[str, int] = {"binary": 1, "parts": 4, "type": 8}


class TaskSpec(BaseModel):
    kind: TaskKind
    num_classes: int = Field(..., ge=1, description="Logit channels (1, 4 or 8)")
    base_loss: BaseLoss
    include_background_in_jaccard: bool = Field(
        False, description="Multiclass only: include class 0 in the Jaccard term"
    )

    @model_validator(mode="after")
    def _check_consistency(self) -> "TaskSpec":
        expected_loss = "bce_logits" if self.kind == "binary" else "cross_entropy"
        if self.base_loss != expected_loss:
            raise ValueError(
                f"task {self.kind!r} requires base_loss {expected_loss!r}, got {self.base_loss!r}"
            )
        if self.num_classes != TASK_NUM_CLASSES[self.kind]:
            raise ValueError(
                f"task {self.kind!r} has {TASK_NUM_CLASSES[self.kind]} output channels, got {self.num_classes}"
            )
        return self

    @property
    def is_binary(self) -> bool:
        return self.kind == "binary"

    @property
    def label_count(self) -> int:
        """Number of distinct class ids in a ClassMask, background included."""
        return 2 if self.is_binary else self.num_classes


class LossConfig(BaseModel):
    epsilon: float = Field(1e-15, gt=0.0, description="Guards the Jaccard ratio and its log")
    jaccard_weight: float = Field(1.0, ge=0.0, description="Weight of the -log J term")


class LabelMapping(BaseModel):
    """Raw dataset pixel value -> contiguous class index, per task."""

    task: TaskKind
    raw_to_class: Dict[int, int] = Field(..., description="Every raw value expected in the masks")
    class_names: List[str] = Field(..., description="Index i names class i; index 0 is background")
    canonical_raw: Optional[Dict[int, int]] = Field(
        None, description="Class -> raw value written back by decode_mask; defaults to the smallest raw value"
    )

    @model_validator(mode="after")
    def _check_contiguous(self) -> "LabelMapping":
        classes = set(self.raw_to_class.values())
        if classes != set(range(len(self.class_names))):
            raise ValueError(
                f"class indices must be contiguous from 0 to {len(self.class_names) - 1}, got {sorted(classes)}"
            )
        if any(not 0 <= raw <= 255 for raw in self.raw_to_class):
            raise ValueError("raw label values must be 8-bit (0..255)")
        return self

    def class_to_raw(self) -> Dict[int, int]:
        if self.canonical_raw is not None:
            return dict(self.canonical_raw)
        inverse: Dict[int, int] = {}
        for raw, cls in sorted(self.raw_to_class.items()):
            inverse.setdefault(cls, raw)
        return inverse
