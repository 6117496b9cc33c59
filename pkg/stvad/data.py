"""
Dataset ingestion and clip windowing.

Layout on disk::

    root/train/<video_id>/<index>.png
    root/test/<video_id>/<index>.png
    root/test_labels/<video_id>.csv   # one 0/1 line per frame

Frames are handled channels-last (H, W, ch) in numpy and converted to
channels-first tensors only when batched for the network.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import cv2
import numpy as np
import structlog
import torch
from torch.utils.data import DataLoader, Dataset

from stvad.schemas import DatasetManifest, Split, VideoEntry

logger = structlog.get_logger(__name__)

FRAME_SUFFIX = ".png"
LABELS_DIR = "test_labels"


class DatasetError(Exception):
    """The dataset tree does not follow the expected layout."""


class LabelMismatchError(DatasetError):
    def __init__(self, video_id, frame_count, label_count, *args, **kwargs):
        self.video_id = video_id
        self.frame_count = frame_count
        self.label_count = label_count
        super().__init__(*args, **kwargs)

    def __str__(self):
        return (
            f"Video {self.video_id!r} has {self.frame_count} frames "
            f"but {self.label_count} labels."
        )


def read_labels(path: Path) -> List[int]:
    labels = []
    with open(path, "r", encoding="utf8") as label_file:
        for lineno, line in enumerate(label_file, start=1):
            value = line.strip()
            if not value:
                continue
            if value not in ("0", "1"):
                raise DatasetError(f"{path}:{lineno}: expected 0 or 1, got {value!r}")
            labels.append(int(value))
    return labels


def load_dataset(root: Union[str, Path], split: Union[Split, str]) -> DatasetManifest:
    """
    Enumerate the videos of one split.

    Videos are sorted by id and frames lexicographically by file name. Labels
    are read for every video that has a CSV under ``test_labels``; they are
    optional for the train split.
    """
    root = Path(root)
    split = Split(split)
    split_dir = root / split.value
    if not split_dir.is_dir():
        raise DatasetError(f"Missing split directory: {split_dir}")

    labels_dir = root / LABELS_DIR
    videos = []
    for video_dir in sorted(p for p in split_dir.iterdir() if p.is_dir()):
        frames = sorted(
            p for p in video_dir.iterdir() if p.suffix.lower() == FRAME_SUFFIX
        )
        if not frames:
            logger.warning("Video without frames skipped", video_id=video_dir.name)
            continue
        labels: Optional[List[int]] = None
        label_path = labels_dir / f"{video_dir.name}.csv"
        if split == Split.TEST and label_path.is_file():
            labels = read_labels(label_path)
            if len(labels) != len(frames):
                raise LabelMismatchError(video_dir.name, len(frames), len(labels))
        videos.append(VideoEntry(video_id=video_dir.name, frames=frames, labels=labels))

    return DatasetManifest(root=root, split=split, videos=videos)


def read_frame(path: Union[str, Path]) -> np.ndarray:
    """Decode an 8-bit image as (H, W) grayscale or (H, W, 3) BGR."""
    image = cv2.imread(str(path), cv2.IMREAD_UNCHANGED)
    if image is None:
        raise DatasetError(f"Unreadable image file: {path}")
    if image.dtype != np.uint8:
        raise DatasetError(f"Expected an 8-bit image, got {image.dtype} in {path}")
    if image.ndim == 3 and image.shape[2] == 4:
        image = cv2.cvtColor(image, cv2.COLOR_BGRA2BGR)
    return image


def normalize_frame(
    raw: np.ndarray, target_size: Sequence[int], grayscale: bool = True
) -> np.ndarray:
    """Bilinear resize to (H, W), optional grayscale, then map [0, 255] to [-1, 1]."""
    height, width = target_size
    image = np.asarray(raw, dtype=np.float32)
    if image.shape[:2] != (height, width):
        image = cv2.resize(image, (width, height), interpolation=cv2.INTER_LINEAR)
    if image.ndim == 3 and image.shape[2] == 1:
        image = image[:, :, 0]
    if grayscale and image.ndim == 3:
        image = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    if image.ndim == 2:
        image = image[:, :, None]
        if not grayscale:
            image = np.repeat(image, 3, axis=2)
    return image / np.float32(127.5) - np.float32(1.0)


def load_video(
    video: VideoEntry, target_size: Sequence[int], grayscale: bool = True
) -> np.ndarray:
    """All frames of a video as a (F, H, W, ch) float32 array."""
    return np.stack(
        [normalize_frame(read_frame(path), target_size, grayscale) for path in video.frames]
    )


@dataclass
class ClipBatch:
    """One sliding window: t-1 input frames and diffs plus the next frame and diff."""

    input_frames: np.ndarray
    input_diffs: np.ndarray
    target_frame: np.ndarray
    target_diff: np.ndarray
    video_id: str
    end_frame_index: int


def make_clips(frames: np.ndarray, t: int, video_id: str = "") -> List[ClipBatch]:
    """
    Cut a (F, H, W, ch) video into F - t windows of t + 1 frames.

    Window j covers frames j..j+t. Frame j only contributes the first input
    difference; the inputs are frames j+1..j+t-1 and the target is frame j+t.
    """
    if t < 2:
        raise ValueError(f"clip length must be at least 2, got {t}")
    count = len(frames)
    if count < t + 1:
        logger.warning(
            "Video too short for a clip, skipped",
            video_id=video_id,
            frames=count,
            needed=t + 1,
        )
        return []

    diffs = frames[1:] - frames[:-1]  # diffs[i - 1] = f_i - f_{i-1}
    clips = []
    for j in range(count - t):
        end = j + t
        clips.append(
            ClipBatch(
                input_frames=frames[j + 1 : end],
                input_diffs=diffs[j : end - 1],
                target_frame=frames[end],
                target_diff=diffs[end - 1],
                video_id=video_id,
                end_frame_index=end,
            )
        )
    return clips


def channels_first(array: np.ndarray) -> torch.Tensor:
    """(..., H, W, ch) numpy to (..., ch, H, W) tensor."""
    return torch.from_numpy(np.ascontiguousarray(np.moveaxis(array, -1, -3)))


def clip_tensors(clip: ClipBatch) -> Dict[str, torch.Tensor]:
    return {
        "frames": channels_first(clip.input_frames),
        "diffs": channels_first(clip.input_diffs),
        "target_frame": channels_first(clip.target_frame),
        "target_diff": channels_first(clip.target_diff),
        "end_frame_index": torch.tensor(clip.end_frame_index),
    }


def stack_clips(clips: Sequence[ClipBatch]) -> Dict[str, torch.Tensor]:
    """Batch clips into (B, T, C, H, W) inputs and (B, C, H, W) targets."""
    tensors = [clip_tensors(clip) for clip in clips]
    return {key: torch.stack([item[key] for item in tensors]) for key in tensors[0]}


class ClipDataset(Dataset):
    def __init__(self, clips: Sequence[ClipBatch]):
        self.clips = list(clips)

    def __len__(self):
        return len(self.clips)

    def __getitem__(self, index):
        return clip_tensors(self.clips[index])


def build_clip_dataset(
    manifest: DatasetManifest,
    clip_len: int,
    target_size: Sequence[int],
    grayscale: bool = True,
) -> ClipDataset:
    clips: List[ClipBatch] = []
    for video in manifest.videos:
        frames = load_video(video, target_size, grayscale)
        clips.extend(make_clips(frames, clip_len, video.video_id))
    logger.info(
        "Clips prepared",
        split=manifest.split.value,
        videos=len(manifest.videos),
        clips=len(clips),
    )
    return ClipDataset(clips)


def make_loader(
    dataset: ClipDataset,
    batch_size: int,
    seed: int,
    shuffle: bool = True,
    num_workers: int = 0,
) -> Tuple[DataLoader, torch.Generator]:
    """A loader whose delivery order depends only on the dataset and ``seed``."""
    generator = torch.Generator().manual_seed(seed)
    loader = DataLoader(
        dataset,
        batch_size=batch_size,
        shuffle=shuffle,
        num_workers=num_workers,
        generator=generator,
        drop_last=False,
    )
    return loader, generator
