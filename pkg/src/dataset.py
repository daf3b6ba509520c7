"""
Sample loading and the torch Dataset used for training and validation.

Per sample: read -> prepare_frame -> normalize -> encode -> augment. The
augmentation seed for (epoch, index) is derived from
(seed, epoch, index), so a sample's transform does not depend on worker
count, loading order, or whether training was resumed.
"""

import logging
from typing import List, Optional, Sequence, Tuple

import numpy as np
import torch
from PIL import Image
from torch.utils.data import Dataset

from .importers.endovis import DatasetLayoutError
from .labels import encode_mask
from .schemas import ChannelStats, LabelMapping, RawSample, SampleRef
from .transforms import augment, normalize_image, prepare_frame

logger = logging.getLogger(__name__)


def read_sample(ref: SampleRef) -> RawSample:
    with Image.open(ref.image_path) as img:
        image = np.asarray(img.convert("RGB"), dtype=np.uint8).copy()
    raw_mask = None
    if ref.mask_path is not None:
        with Image.open(ref.mask_path) as m:
            if m.mode not in ("L", "P"):
                raise DatasetLayoutError(f"{ref.sample_id}: mask must be 8-bit single-channel, got mode {m.mode}")
            raw_mask = np.asarray(m, dtype=np.uint8).copy()
    return RawSample(image=image, raw_mask=raw_mask, video_id=ref.video_id, frame_index=ref.frame_index)


class SegmentationDataset(Dataset):
    """Yields (image float32 [3, H, W], mask int64 [H, W], position) for a list of sample refs."""

    def __init__(
        self,
        refs: Sequence[SampleRef],
        mapping: LabelMapping,
        stats: ChannelStats,
        steps: Sequence = (),
        seed: int = 0,
        strict: bool = True,
    ):
        self.refs: List[SampleRef] = list(refs)
        self.mapping = mapping
        self.stats = stats
        self.steps = list(steps)
        self.seed = seed
        self.strict = strict
        self.epoch = 0

    def set_epoch(self, epoch: int) -> None:
        self.epoch = epoch

    def __len__(self) -> int:
        return len(self.refs)

    def load_pair(self, index: int) -> Tuple[np.ndarray, np.ndarray]:
        """Prepared, normalized image and encoded class mask, before augmentation."""
        ref = self.refs[index]
        if ref.mask_path is None:
            raise DatasetLayoutError(f"{ref.sample_id}: no mask; training and validation need ground truth")
        sample = read_sample(ref)
        image = normalize_image(prepare_frame(sample.image), self.stats)
        mask = encode_mask(prepare_frame(sample.raw_mask), self.mapping, strict=self.strict)
        return image, mask

    def __getitem__(self, index: int):
        image, mask = self.load_pair(index)
        if self.steps:
            seed = int(np.random.SeedSequence([self.seed, self.epoch, index]).generate_state(1)[0])
            image, mask, _ = augment(image, mask, self.steps, seed)
        return torch.from_numpy(image), torch.from_numpy(mask.astype(np.int64)), index
