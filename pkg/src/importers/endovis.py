"""
EndoVis-2017-style directory layout.

    <root>/<video_id>/frames/<stem>.png|.jpg
    <root>/<video_id>/ground_truth/<task>/<stem>.png   (8-bit raw label values)

Frames are paired with masks by file stem. The frame index is the trailing
integer of the stem (frame007 -> 7); stems without one are numbered in
sorted order. Only image headers are read while indexing.
"""

import logging
import re
from pathlib import Path
from typing import Iterable, List, Optional, Union

from PIL import Image

from ..schemas import DatasetIndex, RawSample, SampleRef
from ..labels import write_raw_png

logger = logging.getLogger(__name__)


IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class DatasetLayoutError(ValueError):
    """Raised when a dataset tree is missing directories or masks, or a frame and its mask differ in size."""


class EndoVisImporter:
    def __init__(self, task: str, require_masks: bool = True):
        self.task = task
        self.require_masks = require_masks
        self.index_pattern = re.compile(r"(\d+)$")

    def load(self, root: Union[str, Path]) -> DatasetIndex:
        root = Path(root)
        if not root.is_dir():
            raise DatasetLayoutError(f"dataset root {root} does not exist")

        video_dirs = sorted(p for p in root.iterdir() if p.is_dir() and (p / "frames").is_dir())
        if not video_dirs:
            raise DatasetLayoutError(f"no <video>/frames directories found under {root}")

        samples: List[SampleRef] = []
        for video_dir in video_dirs:
            samples.extend(self._load_video(video_dir))

        index = DatasetIndex(root=root, task=self.task, samples=samples)
        for video_id, count in index.counts().items():
            logger.info(f"{video_id}: {count} frames")
        return index

    def _load_video(self, video_dir: Path) -> List[SampleRef]:
        video_id = video_dir.name
        frames = sorted(p for p in (video_dir / "frames").iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        if not frames:
            raise DatasetLayoutError(f"{video_id}: frames directory is empty")

        mask_dir = video_dir / "ground_truth" / self.task
        if self.require_masks and not mask_dir.is_dir():
            raise DatasetLayoutError(f"{video_id}: missing ground-truth directory {mask_dir}")

        refs: List[SampleRef] = []
        seen = set()
        for position, frame in enumerate(frames):
            frame_index = self._frame_index(frame.stem, position)
            if frame_index in seen:
                raise DatasetLayoutError(f"{video_id}: two frames share frame index {frame_index}")
            seen.add(frame_index)

            mask_path: Optional[Path] = mask_dir / f"{frame.stem}.png"
            if not mask_path.exists():
                if self.require_masks:
                    raise DatasetLayoutError(f"{video_id}/{frame.name}: no mask at {mask_path}")
                mask_path = None
            else:
                self._check_sizes(frame, mask_path)

            refs.append(SampleRef(video_id=video_id, frame_index=frame_index, image_path=frame, mask_path=mask_path))
        return refs

    def _frame_index(self, stem: str, position: int) -> int:
        match = self.index_pattern.search(stem)
        return int(match.group(1)) if match else position

    @staticmethod
    def _check_sizes(frame: Path, mask: Path) -> None:
        with Image.open(frame) as img:
            frame_size = img.size
        with Image.open(mask) as m:
            mask_size = m.size
        if frame_size != mask_size:
            raise DatasetLayoutError(
                f"{frame.parent.parent.name}/{frame.name}: frame is {frame_size[0]}x{frame_size[1]} "
                f"but mask is {mask_size[0]}x{mask_size[1]}"
            )


def load_endovis(root: Union[str, Path], task: str, require_masks: bool = True) -> DatasetIndex:
    """Index a dataset tree; `require_masks=False` is predict-only mode."""
    return EndoVisImporter(task, require_masks=require_masks).load(root)


def index_frames(frame_dir: Union[str, Path], task: str, video_id: Optional[str] = None) -> DatasetIndex:
    """Index a bare directory of frames (no masks) as a single video, for prediction."""
    frame_dir = Path(frame_dir)
    if not frame_dir.is_dir():
        raise DatasetLayoutError(f"frame directory {frame_dir} does not exist")
    if (frame_dir / "frames").is_dir():
        frame_dir = frame_dir / "frames"
        video_id = video_id or frame_dir.parent.name
    frames = sorted(p for p in frame_dir.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not frames:
        raise DatasetLayoutError(f"no .png/.jpg frames in {frame_dir}")
    importer = EndoVisImporter(task, require_masks=False)
    video_id = video_id or frame_dir.name
    refs = [
        SampleRef(video_id=video_id, frame_index=importer._frame_index(p.stem, i), image_path=p)
        for i, p in enumerate(frames)
    ]
    return DatasetIndex(root=frame_dir, task=task, samples=refs)


def write_dataset(samples: Iterable[RawSample], out_dir: Union[str, Path], task: str) -> DatasetIndex:
    """Write samples in the layout above (frameNNN.png names) and return their index."""
    out_dir = Path(out_dir)
    refs: List[SampleRef] = []
    for sample in samples:
        stem = f"frame{sample.frame_index:03d}"
        image_path = out_dir / sample.video_id / "frames" / f"{stem}.png"
        image_path.parent.mkdir(parents=True, exist_ok=True)
        Image.fromarray(sample.image).save(image_path)

        mask_path = None
        if sample.raw_mask is not None:
            mask_path = write_raw_png(sample.raw_mask, out_dir / sample.video_id / "ground_truth" / task / f"{stem}.png")
        refs.append(
            SampleRef(video_id=sample.video_id, frame_index=sample.frame_index, image_path=image_path, mask_path=mask_path)
        )
    refs.sort(key=lambda r: (r.video_id, r.frame_index))
    return DatasetIndex(root=out_dir, task=task, samples=refs)
