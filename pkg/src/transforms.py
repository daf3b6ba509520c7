"""
Frame preparation, normalization and geometric augmentation.

Augmentation runs through an albumentations ReplayCompose. The mask is
passed as the `mask` target so it always receives the same transform as
the image, and the replay record can be applied to a mask on its own.
"""

import logging
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import albumentations as A
import cv2
import numpy as np

from .schemas import (
    ChannelStats,
    HorizontalFlip,
    PadIfNeeded,
    RandomCrop,
    VerticalFlip,
)

logger = logging.getLogger(__name__)


FULL_FRAME = (1080, 1920)
CROPPED_FRAME = (1024, 1280)
# (y, x) of the 1280x1024 window inside a 1920x1080 frame
CROP_ORIGIN = (28, 320)


# ---------------------------------------------------------------------------
# Canvas
# ---------------------------------------------------------------------------
def crop_canvas(array: np.ndarray) -> np.ndarray:
    h, w = array.shape[:2]
    if (h, w) == CROPPED_FRAME:
        return array
    if (h, w) != FULL_FRAME:
        raise ValueError(f"crop_canvas expects a 1920x1080 or 1280x1024 frame, got {w}x{h}")
    y, x = CROP_ORIGIN
    return array[y : y + CROPPED_FRAME[0], x : x + CROPPED_FRAME[1]]


def prepare_frame(array: np.ndarray) -> np.ndarray:
    """Crop native full-size frames; any other size passes through unchanged."""
    if tuple(array.shape[:2]) == FULL_FRAME:
        return crop_canvas(array)
    return array


def embed_in_canvas(mask: np.ndarray, fill: int = 0) -> np.ndarray:
    """Place a 1280x1024 mask back into a 1920x1080 canvas filled with `fill`."""
    if tuple(mask.shape[:2]) != CROPPED_FRAME:
        raise ValueError(f"embed_in_canvas expects a 1280x1024 mask, got {mask.shape[1]}x{mask.shape[0]}")
    canvas = np.full(FULL_FRAME + tuple(mask.shape[2:]), fill, dtype=mask.dtype)
    y, x = CROP_ORIGIN
    canvas[y : y + CROPPED_FRAME[0], x : x + CROPPED_FRAME[1]] = mask
    return canvas


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------
def compute_channel_stats(images: Iterable[np.ndarray], with_std: bool = False) -> ChannelStats:
    """Per-channel mean (and optionally std) of image/255 over every pixel of every image."""
    total = np.zeros(3, dtype=np.float64)
    total_sq = np.zeros(3, dtype=np.float64)
    count = 0
    for image in images:
        pixels = np.asarray(image, dtype=np.float64).reshape(-1, 3) / 255.0
        total += pixels.sum(axis=0)
        total_sq += (pixels ** 2).sum(axis=0)
        count += pixels.shape[0]
    if count == 0:
        raise ValueError("cannot compute channel statistics from zero images")

    mean = total / count
    mean = np.clip(mean, 0.0, 1.0)
    if not with_std:
        return ChannelStats(mean=tuple(float(m) for m in mean))

    std = np.sqrt(np.maximum(total_sq / count - mean ** 2, 0.0))
    if np.any(std <= 0.0):
        logger.warning(f"constant channel(s) found (std={std.tolist()}); using std 1 for those channels")
        std = np.where(std > 0.0, std, 1.0)
    return ChannelStats(mean=tuple(float(m) for m in mean), std=tuple(float(s) for s in std))


def normalize_image(image: np.ndarray, stats: ChannelStats) -> np.ndarray:
    """uint8 [H, W, 3] -> float32 [3, H, W] computed as (image/255 - mean) / std."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an [H, W, 3] image, got shape {image.shape}")
    mean = np.asarray(stats.mean, dtype=np.float64)
    std = np.asarray(stats.std, dtype=np.float64)
    out = (image.astype(np.float64) / 255.0 - mean) / std
    return np.ascontiguousarray(out.transpose(2, 0, 1), dtype=np.float32)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------
def build_augmentation(steps: Sequence, seed: Optional[int] = None) -> A.ReplayCompose:
    """Map augmentation steps onto an albumentations ReplayCompose, in order."""
    transforms = []
    for step in steps:
        if isinstance(step, PadIfNeeded):
            transforms.append(
                A.PadIfNeeded(
                    min_height=step.min_height,
                    min_width=step.min_width,
                    position="center",
                    border_mode=cv2.BORDER_CONSTANT,
                    fill=0,
                    fill_mask=0,
                )
            )
        elif isinstance(step, RandomCrop):
            transforms.append(A.RandomCrop(height=step.height, width=step.width))
        elif isinstance(step, HorizontalFlip):
            transforms.append(A.HorizontalFlip(p=step.p))
        elif isinstance(step, VerticalFlip):
            transforms.append(A.VerticalFlip(p=step.p))
        else:
            raise ValueError(f"Unknown augmentation step: {step!r}")
    pipeline = A.ReplayCompose(transforms)
    if seed is not None:
        pipeline.set_random_seed(seed)
    return pipeline


def check_crop_fits(steps: Sequence, shape: Tuple[int, int]) -> None:
    h, w = int(shape[0]), int(shape[1])
    for step in steps:
        if isinstance(step, PadIfNeeded):
            h, w = max(h, step.min_height), max(w, step.min_width)
        elif isinstance(step, RandomCrop):
            if step.height > h or step.width > w:
                raise ValueError(f"crop {step.height}x{step.width} larger than padded input {h}x{w}")
            h, w = step.height, step.width


def augment(
    image: np.ndarray, mask: np.ndarray, steps: Sequence, seed: int
) -> Tuple[np.ndarray, np.ndarray, Dict[str, Any]]:
    """
    Augment a normalized [C, H, W] image and its [H, W] class mask together.

    The mask rides along as the `mask` target, so it receives the identical
    transform. Images are padded with 0.0 (the channel mean after
    normalization) and masks with background. Returns (image, mask, replay)
    where `replay` is the albumentations replay record.
    """
    if image.shape[-2:] != mask.shape[-2:]:
        raise ValueError(f"image {image.shape[-2:]} and mask {mask.shape[-2:]} differ in size")
    check_crop_fits(steps, mask.shape[-2:])
    if not steps:
        return image, mask, {}

    pipeline = build_augmentation(steps, seed=seed)
    hwc = np.ascontiguousarray(image.transpose(1, 2, 0), dtype=np.float32)
    out = pipeline(image=hwc, mask=mask.astype(np.uint8))
    out_image = np.ascontiguousarray(out["image"].transpose(2, 0, 1))
    out_mask = np.ascontiguousarray(out["mask"]).astype(mask.dtype)
    return out_image, out_mask, out["replay"]


def replay_on_mask(replay: Dict[str, Any], mask: np.ndarray) -> np.ndarray:
    """Apply a recorded augmentation to a class mask alone."""
    if not replay:
        return mask
    out = A.ReplayCompose.replay(replay, image=mask.astype(np.uint8))
    return np.ascontiguousarray(out["image"]).astype(mask.dtype)
