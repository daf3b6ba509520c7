"""
Inference and evaluation.

predict() turns one frame into a class mask at cropped resolution:
binary uses sigmoid(logit) > 0.5 (strict, so a zero logit is background),
multiclass uses argmax with ties going to the lowest class index.
evaluate() walks a dataset index in (video_id, frame_index) order, builds
PredictionRecords and folds them into a MetricReport.
"""

import logging
from pathlib import Path
from typing import List, Optional, Sequence, Union

import numpy as np
import torch

from .dataset import read_sample
from .importers.endovis import DatasetLayoutError
from .labels import decode_mask, default_mapping, encode_mask, write_color_png, write_raw_png
from .metrics import aggregate_report, score_image
from .model import NestedUNet
from .schemas import (
    ChannelStats,
    DatasetIndex,
    ImageScore,
    LabelMapping,
    MetricReport,
    PredictionRecord,
    RawSample,
    TaskSpec,
    TrainHistory,
)
from .transforms import embed_in_canvas, normalize_image, prepare_frame

logger = logging.getLogger(__name__)


def logits_to_mask(logits: torch.Tensor, task: TaskSpec) -> np.ndarray:
    """[N, C, H, W] logits -> uint8 [N, H, W] class masks."""
    if logits.ndim != 4 or logits.shape[1] != task.num_classes:
        raise ValueError(
            f"task {task.kind!r} expects [N, {task.num_classes}, H, W] logits, got {tuple(logits.shape)}"
        )
    logits = logits.detach().float().cpu()
    if task.is_binary:
        return (torch.sigmoid(logits[:, 0]) > 0.5).numpy().astype(np.uint8)
    # numpy argmax returns the first maximal index
    return np.argmax(logits.numpy(), axis=1).astype(np.uint8)


def stats_from_history(history: Optional[TrainHistory]) -> ChannelStats:
    """Normalization stats recorded at training time."""
    if history is None or "channel_stats" not in history.metadata:
        raise ValueError("checkpoint history has no channel_stats; cannot reproduce input normalization")
    return ChannelStats.model_validate(history.metadata["channel_stats"])


def check_model_task(model: NestedUNet, task: TaskSpec) -> None:
    if model.config.num_classes != task.num_classes:
        raise ValueError(
            f"task/class mismatch: model has {model.config.num_classes} output channels, "
            f"task {task.kind!r} needs {task.num_classes}"
        )


@torch.no_grad()
def predict(
    model: NestedUNet,
    sample: Union[RawSample, np.ndarray],
    task: TaskSpec,
    stats: ChannelStats,
) -> np.ndarray:
    check_model_task(model, task)
    image = sample.image if isinstance(sample, RawSample) else np.asarray(sample)
    x = torch.from_numpy(normalize_image(prepare_frame(image), stats)).unsqueeze(0)
    device = next(model.parameters()).device
    model.eval()
    logits = model(x.to(device))
    return logits_to_mask(logits, task)[0]


def evaluate_predictions(
    records: Sequence[PredictionRecord], task: TaskSpec, label: Optional[str] = None
) -> MetricReport:
    rows: List[ImageScore] = []
    for record in sorted(records, key=lambda r: (r.video_id, r.frame_index)):
        if record.gt_mask is None:
            raise ValueError(f"{record.image_id}: missing ground truth")
        iou, dice = score_image(record.pred_mask, record.gt_mask, task)
        rows.append(ImageScore(image_id=record.image_id, video_id=record.video_id, iou=iou, dice=dice))
    return aggregate_report(rows, task=task, label=label)


def predict_index(
    model: NestedUNet,
    index: DatasetIndex,
    task: TaskSpec,
    stats: ChannelStats,
    mapping: Optional[LabelMapping] = None,
    strict: bool = True,
    with_ground_truth: bool = True,
) -> List[PredictionRecord]:
    mapping = mapping or default_mapping(task)
    records: List[PredictionRecord] = []
    for ref in sorted(index.samples, key=lambda r: (r.video_id, r.frame_index)):
        if with_ground_truth and ref.mask_path is None:
            raise DatasetLayoutError(f"{ref.sample_id}: missing ground truth")
        sample = read_sample(ref)
        gt = None
        if with_ground_truth:
            gt = encode_mask(prepare_frame(sample.raw_mask), mapping, strict=strict)
        records.append(
            PredictionRecord(
                image_id=ref.sample_id,
                video_id=ref.video_id,
                frame_index=ref.frame_index,
                pred_mask=predict(model, sample, task, stats),
                gt_mask=gt,
            )
        )
    return records


def evaluate(
    model: NestedUNet,
    index: DatasetIndex,
    task: TaskSpec,
    stats: ChannelStats,
    mapping: Optional[LabelMapping] = None,
    strict: bool = True,
    label: Optional[str] = None,
) -> MetricReport:
    records = predict_index(model, index, task, stats, mapping=mapping, strict=strict)
    report = evaluate_predictions(records, task, label=label)
    logger.info(
        f"evaluated {len(records)} images over {len(report.groups)} videos: "
        f"iou={report.mean_iou:.4f} dice={report.mean_dice:.4f}"
    )
    return report


def write_predictions(
    records: Sequence[PredictionRecord],
    out_dir: Union[str, Path],
    mapping: LabelMapping,
    colorize: bool = True,
    full_canvas: bool = False,
) -> List[Path]:
    """
    Write raw-value masks to <out>/<video>/masks/ and, when `colorize` is set,
    palette-tagged color masks to <out>/<video>/color/.
    """
    out_dir = Path(out_dir)
    written: List[Path] = []
    for record in records:
        mask = record.pred_mask
        if full_canvas:
            mask = embed_in_canvas(mask)
        stem = f"frame{record.frame_index:03d}"
        written.append(write_raw_png(decode_mask(mask, mapping), out_dir / record.video_id / "masks" / f"{stem}.png"))
        if colorize:
            written.append(write_color_png(mask, mapping.task, out_dir / record.video_id / "color" / f"{stem}.png"))
    return written
