"""
Raw label values <-> class indices, and class indices <-> display colors.

Ground-truth masks store dataset raw values: parts use 10/20/30/40 with 0 as
background, type uses 1..7, binary treats any nonzero value as instrument.
encode_mask maps raw values through a 256-entry lookup table; decode_mask
writes each class back as its canonical raw value.

Colorized masks carry their palette in PNG text metadata so a viewer (or
decolorize_mask) never has to guess the mapping.
"""

import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from PIL import Image
from PIL.PngImagePlugin import PngInfo

from .schemas import LabelMapping, TaskSpec
from .tasks import resolve_task

logger = logging.getLogger(__name__)


class UnknownLabelError(ValueError):
    """Raised in strict mode when a mask holds a raw value the LabelMapping does not cover."""


RGB = Tuple[int, int, int]

BACKGROUND_PURPLE: RGB = (68, 1, 84)
INSTRUMENT_YELLOW: RGB = (253, 231, 37)
WRIST_GREEN: RGB = (53, 183, 121)
SHAFT_BLUE: RGB = (49, 104, 142)

PALETTES: Dict[str, List[RGB]] = {
    "binary": [BACKGROUND_PURPLE, INSTRUMENT_YELLOW],
    # shaft, wrist, clasper
    "parts": [BACKGROUND_PURPLE, SHAFT_BLUE, WRIST_GREEN, INSTRUMENT_YELLOW],
    "type": [
        BACKGROUND_PURPLE,
        (230, 25, 75),
        (60, 180, 75),
        (255, 225, 25),
        (0, 130, 200),
        (245, 130, 48),
        (70, 240, 240),
        (240, 50, 230),
    ],
}

TYPE_CLASS_NAMES = [
    "background",
    "bipolar forceps",
    "prograsp forceps",
    "large needle driver",
    "vessel sealer",
    "grasping retractor",
    "monopolar curved scissors",
    "other",
]


def default_mapping(task: Union[str, TaskSpec]) -> LabelMapping:
    kind = resolve_task(task.kind if isinstance(task, TaskSpec) else task)
    if kind == "binary":
        raw_to_class = {raw: (1 if raw else 0) for raw in range(256)}
        return LabelMapping(
            task="binary",
            raw_to_class=raw_to_class,
            class_names=["background", "instrument"],
            canonical_raw={0: 0, 1: 255},
        )
    if kind == "parts":
        # 40 (other/probe) folds into background to keep four classes
        return LabelMapping(
            task="parts",
            raw_to_class={0: 0, 10: 1, 20: 2, 30: 3, 40: 0},
            class_names=["background", "shaft", "wrist", "clasper"],
            canonical_raw={0: 0, 1: 10, 2: 20, 3: 30},
        )
    return LabelMapping(
        task="type",
        raw_to_class={i: i for i in range(8)},
        class_names=list(TYPE_CLASS_NAMES),
    )


def load_mapping(path: Union[str, Path]) -> LabelMapping:
    """Read a LabelMapping override from JSON."""
    with open(path) as f:
        return LabelMapping.model_validate(json.load(f))


def _lookup_table(mapping: LabelMapping) -> np.ndarray:
    lut = np.full(256, -1, dtype=np.int16)
    for raw, cls in mapping.raw_to_class.items():
        lut[raw] = cls
    return lut


def _as_raw(raw_mask: np.ndarray) -> np.ndarray:
    raw_mask = np.asarray(raw_mask)
    if raw_mask.dtype == np.uint8:
        return raw_mask
    if not np.issubdtype(raw_mask.dtype, np.integer):
        raise ValueError(f"raw masks must hold integers, got dtype {raw_mask.dtype}")
    if raw_mask.size and (raw_mask.min() < 0 or raw_mask.max() > 255):
        raise ValueError("raw mask values must be 8-bit (0..255)")
    return raw_mask.astype(np.uint8)


def encode_mask(raw_mask: np.ndarray, mapping: LabelMapping, strict: bool = True) -> np.ndarray:
    """Raw label values -> uint8 class mask. Non-strict mode sends unknown values to background."""
    raw_mask = _as_raw(raw_mask)
    classes = _lookup_table(mapping)[raw_mask]
    unknown = classes < 0
    if unknown.any():
        values = sorted(int(v) for v in np.unique(raw_mask[unknown]))
        if strict:
            raise UnknownLabelError(f"raw label values {values} are not in the {mapping.task} mapping")
        logger.warning(
            f"{int(unknown.sum())} pixels with unknown raw values {values} mapped to background"
        )
        classes = np.where(unknown, 0, classes)
    return classes.astype(np.uint8)


def decode_mask(mask: np.ndarray, mapping: LabelMapping) -> np.ndarray:
    """Class mask -> raw label values (each class written as its canonical raw value)."""
    mask = np.asarray(mask)
    inverse = mapping.class_to_raw()
    lut = np.zeros(len(mapping.class_names), dtype=np.uint8)
    for cls, raw in inverse.items():
        lut[cls] = raw
    if mask.size and (mask.min() < 0 or mask.max() >= len(lut)):
        raise ValueError(f"class ids must lie in [0, {len(lut)}), got max {int(mask.max())}")
    return lut[mask.astype(np.intp)]


def palette_for(task: Union[str, TaskSpec]) -> List[RGB]:
    return PALETTES[resolve_task(task.kind if isinstance(task, TaskSpec) else task)]


def colorize_mask(mask: np.ndarray, task: Union[str, TaskSpec]) -> np.ndarray:
    palette = np.asarray(palette_for(task), dtype=np.uint8)
    mask = np.asarray(mask)
    if mask.size and (mask.min() < 0 or mask.max() >= len(palette)):
        raise ValueError(f"class id {int(mask.max())} outside the {len(palette)}-color palette")
    return palette[mask.astype(np.intp)]


def decolorize_mask(rgb: np.ndarray, task: Union[str, TaskSpec]) -> np.ndarray:
    """Colorized RGB -> class mask; any color outside the palette is an error."""
    rgb = np.asarray(rgb)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"expected an [H, W, 3] color image, got shape {rgb.shape}")
    palette = palette_for(task)
    keys = (rgb[..., 0].astype(np.int64) << 16) | (rgb[..., 1].astype(np.int64) << 8) | rgb[..., 2]
    color_to_class = {(r << 16) | (g << 8) | b: cls for cls, (r, g, b) in enumerate(palette)}
    unique, inverse = np.unique(keys, return_inverse=True)
    lookup = np.empty(len(unique), dtype=np.uint8)
    for i, key in enumerate(unique):
        key = int(key)
        if key not in color_to_class:
            color = ((key >> 16) & 255, (key >> 8) & 255, key & 255)
            raise ValueError(f"color {color} is not in the {_task_name(task)} palette")
        lookup[i] = color_to_class[key]
    return lookup[inverse].reshape(keys.shape)


def _task_name(task: Union[str, TaskSpec]) -> str:
    return task.kind if isinstance(task, TaskSpec) else str(task)


def write_color_png(mask: np.ndarray, task: Union[str, TaskSpec], path: Union[str, Path]) -> Path:
    """Colorize a class mask and save it with the palette recorded as PNG text."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    info = PngInfo()
    info.add_text("task", _task_name(task))
    info.add_text("palette", json.dumps([list(c) for c in palette_for(task)]))
    Image.fromarray(colorize_mask(mask, task)).save(path, pnginfo=info)
    return path


def read_palette(path: Union[str, Path]) -> Optional[List[RGB]]:
    with Image.open(path) as img:
        text = getattr(img, "text", {}) or {}
    if "palette" not in text:
        return None
    return [tuple(c) for c in json.loads(text["palette"])]


def write_raw_png(raw_mask: np.ndarray, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(_as_raw(raw_mask)).save(path)
    return path
