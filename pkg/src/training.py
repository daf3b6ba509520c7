"""
Training loop.

train() runs AdamW minibatch steps on the segmentation loss for one split
(a k-fold view or a fixed validation list), validates every
`validate_every` epochs, and keeps three files in `checkpoint_dir`:

  best.ckpt     highest validation IoU so far (last epoch when there is no validation)
  last.ckpt     end of the most recent epoch
  history.json  per-epoch records plus optimizer, normalization and split metadata

Epoch e shuffles with a torch generator seeded from seed + e and augments
each sample from (seed, e, index). A run resumed from last.ckpt therefore
sees exactly the batches an uninterrupted run would.
"""

import logging
import time
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Set, Tuple

import numpy as np
import torch
from torch.utils.data import DataLoader

from .dataset import SegmentationDataset, read_sample
from .evaluation import logits_to_mask, stats_from_history
from .folds import kfold_split
from .labels import default_mapping
from .losses import segmentation_loss
from .metrics import score_image
from .model import NestedUNet, build_model, default_model_config, load_checkpoint, save_checkpoint
from .run_log import log_epoch
from .schemas import (
    ChannelStats,
    DatasetIndex,
    EpochRecord,
    FoldSplit,
    LabelMapping,
    LossConfig,
    SampleRef,
    TaskSpec,
    TrainConfig,
    TrainHistory,
)
from .tasks import get_task_spec
from .transforms import compute_channel_stats, prepare_frame

logger = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    """Raised when a training batch produces a NaN/inf loss or logits; names the epoch and batch."""

    def __init__(self, epoch: int, batch_id: int, detail: str = "loss"):
        self.epoch = epoch
        self.batch_id = batch_id
        super().__init__(f"non-finite {detail} at epoch {epoch}, batch {batch_id}")


class SplitLeakError(RuntimeError):
    """Raised when a validation video shows up among the training samples."""


class Checkpoint(NamedTuple):
    model: NestedUNet
    best_path: Path
    last_path: Path


class Split(NamedTuple):
    train_videos: List[str]
    val_videos: List[str]
    label: str


# ---------------------------------------------------------------------------
# Setup helpers
# ---------------------------------------------------------------------------
def resolve_device(name: str) -> torch.device:
    if name == "auto":
        return torch.device("cuda" if torch.cuda.is_available() else "cpu")
    if name == "cuda" and not torch.cuda.is_available():
        raise RuntimeError("device 'cuda' requested but CUDA is not available")
    return torch.device(name)


def build_optimizer(model: torch.nn.Module, cfg: TrainConfig, learning_rate: Optional[float] = None):
    return torch.optim.AdamW(
        model.parameters(),
        lr=cfg.learning_rate if learning_rate is None else learning_rate,
        betas=tuple(cfg.betas),
        weight_decay=cfg.weight_decay,
    )


def resolve_split(cfg: TrainConfig, index: DatasetIndex, split: Optional[FoldSplit] = None) -> Split:
    videos = index.video_ids
    if cfg.split_mode == "fixed":
        unknown = sorted(set(cfg.val_videos) - set(videos))
        if unknown:
            raise ValueError(f"validation videos not in dataset: {unknown}")
        val = sorted(set(cfg.val_videos))
        return Split([v for v in videos if v not in val], val, "fixed-split")

    if split is None:
        split = kfold_split(videos, cfg.k, cfg.seed)[cfg.fold_index]
    missing = sorted(set(videos) - set(split.assignments))
    if missing:
        raise ValueError(f"videos missing from the fold assignment: {missing}")
    return Split(split.train_videos, split.val_videos, split.label)


def audit_split(train_refs: Sequence[SampleRef], val_videos: Sequence[str]) -> None:
    leaked: Set[str] = {r.video_id for r in train_refs} & set(val_videos)
    if leaked:
        raise SplitLeakError(f"validation videos found in the training set: {sorted(leaked)}")


def resolve_model_config(cfg: TrainConfig, task: TaskSpec):
    model_cfg = cfg.model or default_model_config(task.num_classes, width=cfg.model_width)
    if model_cfg.num_classes != task.num_classes:
        raise ValueError(
            f"model has {model_cfg.num_classes} output channels but task {task.kind!r} needs {task.num_classes}"
        )
    return model_cfg


def training_stats(refs: Sequence[SampleRef], with_std: bool) -> ChannelStats:
    return compute_channel_stats((prepare_frame(read_sample(r).image) for r in refs), with_std=with_std)


# ---------------------------------------------------------------------------
# Epoch loops
# ---------------------------------------------------------------------------
def train_one_epoch(
    model: torch.nn.Module,
    optimizer: torch.optim.Optimizer,
    loader,
    task: TaskSpec,
    loss_cfg: Optional[LossConfig] = None,
    *,
    epoch: int = 0,
    device: Optional[torch.device] = None,
    grad_clip_norm: Optional[float] = None,
) -> float:
    """One pass over `loader`; returns the mean batch loss."""
    device = device or torch.device("cpu")
    model.train()
    total, batches = 0.0, 0
    for batch_id, batch in enumerate(loader):
        images, masks = batch[0].to(device), batch[1].to(device)
        optimizer.zero_grad(set_to_none=True)
        logits = model(images)
        if not torch.isfinite(logits).all():
            logger.error(f"non-finite logits at epoch {epoch}, batch {batch_id}; aborting")
            raise NonFiniteLossError(epoch, batch_id, "logits")
        loss = segmentation_loss(logits, masks, task, loss_cfg)
        if not torch.isfinite(loss):
            logger.error(f"non-finite loss at epoch {epoch}, batch {batch_id}; aborting")
            raise NonFiniteLossError(epoch, batch_id)
        loss.backward()
        if grad_clip_norm is not None:
            torch.nn.utils.clip_grad_norm_(model.parameters(), grad_clip_norm)
        optimizer.step()
        total += float(loss.detach())
        batches += 1
    if batches == 0:
        raise ValueError("training loader produced no batches")
    return total / batches


@torch.no_grad()
def validate(model: torch.nn.Module, loader, task: TaskSpec, device: Optional[torch.device] = None) -> Tuple[float, float]:
    """Mean per-image (IoU, Dice) over a loader."""
    device = device or torch.device("cpu")
    model.eval()
    ious: List[float] = []
    dices: List[float] = []
    for batch in loader:
        preds = logits_to_mask(model(batch[0].to(device)), task)
        for pred, gt in zip(preds, batch[1].numpy()):
            iou, dice = score_image(pred, gt, task)
            ious.append(iou)
            dices.append(dice)
    if not ious:
        raise ValueError("validation loader produced no images")
    return float(np.mean(ious)), float(np.mean(dices))


def _loader(dataset: SegmentationDataset, cfg: TrainConfig, epoch: int, shuffle: bool) -> DataLoader:
    generator = torch.Generator()
    generator.manual_seed(cfg.seed + epoch)
    return DataLoader(
        dataset,
        batch_size=cfg.batch_size,
        shuffle=shuffle,
        generator=generator,
        num_workers=cfg.num_workers,
    )


# ---------------------------------------------------------------------------
# Full run
# ---------------------------------------------------------------------------
def train(
    cfg: TrainConfig,
    index: DatasetIndex,
    split: Optional[FoldSplit] = None,
    mapping: Optional[LabelMapping] = None,
) -> Tuple[Checkpoint, TrainHistory]:
    task = get_task_spec(cfg.task, include_background_in_jaccard=cfg.include_background_in_jaccard)
    mapping = mapping or default_mapping(task)
    device = resolve_device(cfg.device)
    resolved = resolve_split(cfg, index, split)

    train_refs = index.select(resolved.train_videos)
    val_refs = index.select(resolved.val_videos)
    if not train_refs:
        raise ValueError(f"training fold is empty ({resolved.label})")
    audit_split(train_refs, resolved.val_videos)

    out_dir = Path(cfg.checkpoint_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    best_path, last_path, history_path = out_dir / "best.ckpt", out_dir / "last.ckpt", out_dir / "history.json"

    if cfg.resume_from is not None:
        model, optimizer_state, history = load_checkpoint(cfg.resume_from)
        if history is None:
            history = TrainHistory()
        stats = stats_from_history(history)
        if model.config.num_classes != task.num_classes:
            raise ValueError(f"checkpoint {cfg.resume_from} was trained for a different task")
        model.to(device)
        optimizer = build_optimizer(model, cfg)
        if optimizer_state:
            optimizer.load_state_dict(optimizer_state)
        logger.info(f"resuming from {cfg.resume_from} at epoch {history.next_epoch}")
    else:
        model = build_model(resolve_model_config(cfg, task), seed=cfg.seed).to(device)
        optimizer = build_optimizer(model, cfg)
        stats = training_stats(train_refs, with_std=cfg.normalize_std)
        history = TrainHistory()

    history.metadata.update(
        {
            "optimizer": {
                "name": cfg.optimizer,
                "learning_rate": cfg.learning_rate,
                "betas": list(cfg.betas),
                "weight_decay": cfg.weight_decay,
                "grad_clip_norm": cfg.grad_clip_norm,
            },
            "channel_stats": stats.model_dump(mode="json"),
            "task": task.kind,
            "split": resolved.label,
            "train_videos": resolved.train_videos,
            "val_videos": resolved.val_videos,
            "seed": cfg.seed,
        }
    )

    train_set = SegmentationDataset(train_refs, mapping, stats, cfg.augment, seed=cfg.seed, strict=cfg.strict_labels)
    val_set = SegmentationDataset(val_refs, mapping, stats, (), seed=cfg.seed, strict=cfg.strict_labels)
    logger.info(
        f"{resolved.label}: {len(train_set)} training images from {len(resolved.train_videos)} videos, "
        f"{len(val_set)} validation images from {len(resolved.val_videos)} videos"
    )

    for epoch in range(history.next_epoch, cfg.epochs):
        started = time.perf_counter()
        audit_split(train_set.refs, resolved.val_videos)
        train_set.set_epoch(epoch)
        train_loss = train_one_epoch(
            model,
            optimizer,
            _loader(train_set, cfg, epoch, shuffle=True),
            task,
            cfg.loss,
            epoch=epoch,
            device=device,
            grad_clip_norm=cfg.grad_clip_norm,
        )

        val_iou = val_dice = None
        due = (epoch + 1) % cfg.validate_every == 0 or epoch == cfg.epochs - 1
        if val_set.refs and due:
            val_iou, val_dice = validate(model, _loader(val_set, cfg, epoch, shuffle=False), task, device)

        record = EpochRecord(
            epoch=epoch,
            train_loss=train_loss,
            val_iou=val_iou,
            val_dice=val_dice,
            wall_seconds=time.perf_counter() - started,
        )
        history.append(record)
        logger.info(
            f"epoch={epoch} train_loss={train_loss:.6f} "
            f"val_iou={'n/a' if val_iou is None else f'{val_iou:.4f}'} "
            f"val_dice={'n/a' if val_dice is None else f'{val_dice:.4f}'} "
            f"wall_seconds={record.wall_seconds:.2f}"
        )
        log_epoch(out_dir, record, split_label=resolved.label, task=task.kind)

        save_checkpoint(model, optimizer.state_dict(), history, last_path)
        if history.best_epoch == epoch:
            save_checkpoint(model, optimizer.state_dict(), history, best_path)
        history_path.write_text(history.model_dump_json(indent=2))

    if not last_path.exists():
        # resumed at or past cfg.epochs; still leave a complete output directory
        save_checkpoint(model, optimizer.state_dict(), history, last_path)
        history_path.write_text(history.model_dump_json(indent=2))
    if not best_path.exists():
        save_checkpoint(model, optimizer.state_dict(), history, best_path)

    return Checkpoint(model=model, best_path=best_path, last_path=last_path), history


def cross_validation_score(histories: Sequence[TrainHistory]) -> Dict[str, float]:
    """Mean of per-fold best validation IoU and Dice."""
    if not histories:
        raise ValueError("no fold histories to combine")
    ious, dices = [], []
    for i, history in enumerate(histories):
        best = history.best_record()
        if best is None or best.val_iou is None:
            raise ValueError(f"fold history {i} has no validated epoch")
        ious.append(best.val_iou)
        dices.append(best.val_dice)
    return {
        "folds": len(histories),
        "mean_iou": float(np.mean(ious)),
        "mean_dice": float(np.mean(dices)),
    }
