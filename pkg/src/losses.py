"""
Segmentation loss: base cross-entropy term plus a -log soft-Jaccard term.

    loss = H + w * (-log J)

H is binary cross-entropy on logits (binary task, one channel) or per-pixel
cross-entropy (parts/type). J is the ratio-of-sums soft Jaccard

    J = (sum p*m + eps) / (sum (p + m) - sum p*m + eps)

on sigmoid or softmax probabilities. For multiclass tasks J is the mean of
per-class Jaccards; a class absent from both the target and the argmax
prediction is skipped, and J = 1 when every class is skipped.
"""

from typing import Optional, Tuple

import torch
import torch.nn.functional as F

from .schemas import LossConfig, TaskSpec


def soft_jaccard(probs: torch.Tensor, target: torch.Tensor, cfg: Optional[LossConfig] = None) -> torch.Tensor:
    if probs.shape != target.shape:
        raise ValueError(f"shape mismatch: probs {tuple(probs.shape)} vs target {tuple(target.shape)}")
    eps = (cfg or LossConfig()).epsilon
    target = target.to(probs.dtype)
    intersection = (probs * target).sum()
    total = (probs + target).sum()
    return (intersection + eps) / (total - intersection + eps)


def _check_inputs(logits: torch.Tensor, target: torch.Tensor, task: TaskSpec) -> None:
    if logits.ndim != 4:
        raise ValueError(f"logits must be [N, C, H, W], got shape {tuple(logits.shape)}")
    if logits.shape[1] != task.num_classes:
        raise ValueError(
            f"channel mismatch: task {task.kind!r} needs {task.num_classes} logit channels, got {logits.shape[1]}"
        )
    expected = (logits.shape[0],) + tuple(logits.shape[2:])
    if tuple(target.shape) != expected:
        raise ValueError(f"target shape {tuple(target.shape)} does not match logits {expected}")
    if not torch.isfinite(logits).all():
        raise ValueError("logits contain non-finite values")
    if target.numel() and (int(target.min()) < 0 or int(target.max()) >= task.label_count):
        raise ValueError(
            f"target values must lie in [0, {task.label_count}) for task {task.kind!r}, "
            f"got range [{int(target.min())}, {int(target.max())}]"
        )


def loss_terms(
    logits: torch.Tensor, target: torch.Tensor, task: TaskSpec, cfg: Optional[LossConfig] = None
) -> Tuple[torch.Tensor, torch.Tensor]:
    """Return (H, J) for a batch; `target` is an integer class mask [N, H, W]."""
    cfg = cfg or LossConfig()
    _check_inputs(logits, target, task)

    if task.is_binary:
        t = target.unsqueeze(1).to(logits.dtype)
        base = F.binary_cross_entropy_with_logits(logits, t)
        return base, soft_jaccard(torch.sigmoid(logits), t, cfg)

    target = target.long()
    base = F.cross_entropy(logits, target)
    probs = torch.softmax(logits, dim=1)
    onehot = F.one_hot(target, num_classes=task.num_classes).permute(0, 3, 1, 2).to(logits.dtype)
    hard = logits.detach().argmax(dim=1)

    first = 0 if task.include_background_in_jaccard else 1
    per_class = []
    for c in range(first, task.num_classes):
        if not ((target == c).any() or (hard == c).any()):
            continue
        per_class.append(soft_jaccard(probs[:, c], onehot[:, c], cfg))
    if not per_class:
        return base, torch.ones((), dtype=logits.dtype, device=logits.device)
    return base, torch.stack(per_class).mean()


def segmentation_loss(
    logits: torch.Tensor, target: torch.Tensor, task: TaskSpec, cfg: Optional[LossConfig] = None
) -> torch.Tensor:
    cfg = cfg or LossConfig()
    base, jaccard = loss_terms(logits, target, task, cfg)
    return base + cfg.jaccard_weight * (-torch.log(jaccard))
