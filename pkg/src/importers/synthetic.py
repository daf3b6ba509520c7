"""
Deterministic synthetic instrument scenes.

Each image is a smooth reddish tissue texture with 1-3 instrument-like
shapes entering from the border: a shaft bar, a round wrist joint and a
two-jaw clasper. Raw mask values follow the dataset conventions:

  binary  instrument = 255
  parts   shaft = 10, wrist = 20, clasper = 30, probe = 40
  type    one value in 1..6 per instrument, probe = 7

Every image draws from its own generator seeded with (seed, image index),
so any image can be regenerated alone and the output does not depend on
generation order.
"""

import logging
import math
from typing import List, Tuple

import numpy as np
from PIL import Image, ImageDraw

from ..schemas import RawSample, SynthSpec

logger = logging.getLogger(__name__)


PART_VALUES = {"shaft": 10, "wrist": 20, "clasper": 30, "probe": 40}
PART_SHADES = {"shaft": (70, 72, 78), "wrist": (150, 152, 158), "clasper": (205, 205, 210), "probe": (225, 225, 215)}

Point = Tuple[float, float]


class SyntheticGenerator:
    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.num_videos = min(spec.num_videos, spec.num_images)

    def generate(self) -> List[RawSample]:
        return [self.generate_one(i) for i in range(self.spec.num_images)]

    def video_of(self, index: int) -> Tuple[str, int]:
        """(video_id, frame_index) for image `index`; images are dealt round-robin over videos."""
        return f"synthetic_video_{index % self.num_videos + 1:02d}", index // self.num_videos

    def generate_one(self, index: int) -> RawSample:
        spec = self.spec
        rng = np.random.default_rng([spec.seed, index])
        image = Image.fromarray(self._background(rng))
        mask = Image.new("L", (spec.width, spec.height), 0)
        draw_img, draw_mask = ImageDraw.Draw(image), ImageDraw.Draw(mask)

        if spec.include_probe:
            self._draw_probe(rng, draw_img, draw_mask)

        lo, hi = spec.instruments_per_image
        for _ in range(int(rng.integers(lo, hi + 1))):
            type_value = int(rng.integers(1, 7))
            for part, polygon in self._instrument(rng):
                draw_img.polygon(polygon, fill=self._shade(rng, part))
                draw_mask.polygon(polygon, fill=self._raw_value(part, type_value))

        video_id, frame_index = self.video_of(index)
        return RawSample(
            image=np.asarray(image, dtype=np.uint8).copy(),
            raw_mask=np.asarray(mask, dtype=np.uint8).copy(),
            video_id=video_id,
            frame_index=frame_index,
        )

    # -----------------------------------------------------------------------
    def _raw_value(self, part: str, type_value: int) -> int:
        if self.spec.task == "binary":
            return 255
        if self.spec.task == "parts":
            return PART_VALUES[part]
        return 7 if part == "probe" else type_value

    @staticmethod
    def _shade(rng: np.random.Generator, part: str) -> Tuple[int, int, int]:
        jitter = int(rng.integers(-12, 13))
        return tuple(int(np.clip(c + jitter, 0, 255)) for c in PART_SHADES[part])

    def _background(self, rng: np.random.Generator) -> np.ndarray:
        h, w = self.spec.height, self.spec.width
        coarse = rng.uniform(0.0, 1.0, size=(max(2, h // 32), max(2, w // 32), 3))
        smooth = np.asarray(
            Image.fromarray((coarse * 255).astype(np.uint8)).resize((w, h), Image.Resampling.BILINEAR),
            dtype=np.float64,
        ) / 255.0
        base = np.array([170.0, 60.0, 55.0])
        tissue = base + (smooth - 0.5) * np.array([60.0, 40.0, 35.0])
        tissue += rng.normal(0.0, 6.0, size=(h, w, 3))
        return np.clip(tissue, 0, 255).astype(np.uint8)

    def _instrument(self, rng: np.random.Generator) -> List[Tuple[str, List[Point]]]:
        h, w = self.spec.height, self.spec.width
        start = self._border_point(rng)
        target = (w / 2 + rng.uniform(-w / 4, w / 4), h / 2 + rng.uniform(-h / 4, h / 4))
        dx, dy = target[0] - start[0], target[1] - start[1]
        dist = math.hypot(dx, dy) or 1.0
        ux, uy = dx / dist, dy / dist
        px, py = -uy, ux
        half = max(3.0, min(h, w) * rng.uniform(0.025, 0.04))
        length = dist * rng.uniform(0.7, 1.0)
        joint = (start[0] + ux * length, start[1] + uy * length)

        shaft = [
            (start[0] + px * half, start[1] + py * half),
            (joint[0] + px * half, joint[1] + py * half),
            (joint[0] - px * half, joint[1] - py * half),
            (start[0] - px * half, start[1] - py * half),
        ]
        r = half * 1.4
        wrist = [
            (joint[0] + r * math.cos(a), joint[1] + r * math.sin(a))
            for a in np.linspace(0.0, 2 * math.pi, 16, endpoint=False)
        ]

        parts: List[Tuple[str, List[Point]]] = [("shaft", shaft), ("wrist", wrist)]
        opening = rng.uniform(0.15, 0.45)
        jaw_len = half * rng.uniform(3.0, 4.5)
        for side in (-1.0, 1.0):
            angle = math.atan2(uy, ux) + side * opening
            tip = (joint[0] + math.cos(angle) * (r + jaw_len), joint[1] + math.sin(angle) * (r + jaw_len))
            base = (joint[0] + px * side * half * 0.5, joint[1] + py * side * half * 0.5)
            jaw = [
                (base[0] + px * half * 0.35, base[1] + py * half * 0.35),
                (tip[0], tip[1]),
                (base[0] - px * half * 0.35, base[1] - py * half * 0.35),
            ]
            parts.append(("clasper", jaw))
        return parts

    def _border_point(self, rng: np.random.Generator) -> Point:
        h, w = self.spec.height, self.spec.width
        side = int(rng.integers(0, 3))
        if side == 0:
            return 0.0, rng.uniform(0.1 * h, 0.9 * h)
        if side == 1:
            return float(w - 1), rng.uniform(0.1 * h, 0.9 * h)
        return rng.uniform(0.1 * w, 0.9 * w), 0.0

    def _draw_probe(self, rng: np.random.Generator, draw_img: ImageDraw.ImageDraw, draw_mask: ImageDraw.ImageDraw) -> None:
        h, w = self.spec.height, self.spec.width
        cx, cy = rng.uniform(0.2 * w, 0.8 * w), rng.uniform(0.6 * h, 0.9 * h)
        rx, ry = rng.uniform(0.06, 0.1) * w, rng.uniform(0.03, 0.05) * h
        box = [cx - rx, cy - ry, cx + rx, cy + ry]
        draw_img.ellipse(box, fill=self._shade(rng, "probe"))
        draw_mask.ellipse(box, fill=self._raw_value("probe", 7))


def generate_synthetic(spec: SynthSpec) -> List[RawSample]:
    samples = SyntheticGenerator(spec).generate()
    logger.info(f"generated {len(samples)} synthetic {spec.task} images ({spec.height}x{spec.width}, seed={spec.seed})")
    return samples
