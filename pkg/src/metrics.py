"""
IoU / Dice evaluation on hard class masks.

Per class c: IoU = tp / (tp + fp + fn), Dice = 2tp / (2tp + fp + fn).
Classes with tp + fp + fn = 0 are skipped; the image score is the mean over
the remaining classes, and an image whose classes are all skipped scores
1.0. Binary images evaluate class 1 only, parts 1..3, type 1..7.

Aggregation is a per-image mean with population standard deviation, plus
per-video groups. Counts are exact integers, so the float results match a
per-pixel counting loop bit for bit.
"""

import logging
from collections import defaultdict
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

from .schemas import (
    TASK_NUM_CLASSES,
    ConfusionCounts,
    GroupScore,
    ImageScore,
    MetricReport,
    ReportSettings,
    TaskSpec,
)

logger = logging.getLogger(__name__)


TaskLike = Union[TaskSpec, str]


def _kind(task: TaskLike) -> str:
    return task.kind if isinstance(task, TaskSpec) else str(task)


def evaluation_classes(task: TaskLike) -> List[int]:
    kind = _kind(task)
    if kind == "binary":
        return [1]
    if kind not in TASK_NUM_CLASSES:
        raise ValueError(f"Unknown task: {kind!r}")
    return list(range(1, TASK_NUM_CLASSES[kind]))


def _check_masks(pred: np.ndarray, gt: np.ndarray) -> None:
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    if pred.size == 0:
        raise ValueError("cannot score an empty image")


def confusion_counts(pred: np.ndarray, gt: np.ndarray, class_id: int) -> ConfusionCounts:
    pred, gt = np.asarray(pred), np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    p = pred == class_id
    g = gt == class_id
    return ConfusionCounts(
        tp=int(np.count_nonzero(p & g)),
        fp=int(np.count_nonzero(p & ~g)),
        fn=int(np.count_nonzero(~p & g)),
    )


def per_class_scores(
    pred: np.ndarray, gt: np.ndarray, classes: Iterable[int]
) -> Dict[int, Optional[Tuple[float, float]]]:
    """class id -> (iou, dice), or None when the class is absent from both masks."""
    pred, gt = np.asarray(pred), np.asarray(gt)
    _check_masks(pred, gt)
    scores: Dict[int, Optional[Tuple[float, float]]] = {}
    for c in classes:
        counts = confusion_counts(pred, gt, c)
        if counts.empty:
            scores[c] = None
            continue
        iou = counts.tp / (counts.tp + counts.fp + counts.fn)
        dice = 2 * counts.tp / (2 * counts.tp + counts.fp + counts.fn)
        scores[c] = (iou, dice)
    return scores


def score_image(pred: np.ndarray, gt: np.ndarray, task: TaskLike) -> Tuple[float, float]:
    """(iou, dice) for one image."""
    scored = [s for s in per_class_scores(pred, gt, evaluation_classes(task)).values() if s is not None]
    if not scored:
        return 1.0, 1.0
    return (
        sum(s[0] for s in scored) / len(scored),
        sum(s[1] for s in scored) / len(scored),
    )


def iou_metric(pred: np.ndarray, gt: np.ndarray, task: TaskLike) -> float:
    return score_image(pred, gt, task)[0]


def dice_metric(pred: np.ndarray, gt: np.ndarray, task: TaskLike) -> float:
    return score_image(pred, gt, task)[1]


def _mean_std(values: List[float]) -> Tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    return min(float(arr.mean()), 1.0), float(arr.std())


def aggregate_report(
    rows: List[ImageScore],
    task: Optional[TaskLike] = None,
    label: Optional[str] = None,
    epsilon: float = 1e-15,
) -> MetricReport:
    """Mean and population std over images, plus per-video groups; rows are ordered by (video_id, image_id)."""
    if not rows:
        raise ValueError("cannot aggregate an empty set of image scores")
    rows = sorted(rows, key=lambda r: (r.video_id, r.image_id))

    by_video: Dict[str, List[ImageScore]] = defaultdict(list)
    for row in rows:
        by_video[row.video_id].append(row)

    groups = []
    for video_id in sorted(by_video):
        members = by_video[video_id]
        mean_iou, std_iou = _mean_std([r.iou for r in members])
        mean_dice, std_dice = _mean_std([r.dice for r in members])
        groups.append(
            GroupScore(
                video_id=video_id,
                count=len(members),
                mean_iou=mean_iou,
                std_iou=std_iou,
                mean_dice=mean_dice,
                std_dice=std_dice,
            )
        )

    mean_iou, std_iou = _mean_std([r.iou for r in rows])
    mean_dice, std_dice = _mean_std([r.dice for r in rows])
    return MetricReport(
        per_image=rows,
        mean_iou=mean_iou,
        std_iou=std_iou,
        mean_dice=mean_dice,
        std_dice=std_dice,
        groups=groups,
        settings=ReportSettings(epsilon=epsilon),
        task=_kind(task) if task is not None else None,
        label=label,
    )
