from enum import Enum
from pathlib import Path
from typing import List, Optional

from pydantic import BaseModel, Field, validator

from .base import ConfigSection, split_csv


class Split(str, Enum):
    TRAIN = "train"
    TEST = "test"


class AnomalyKind(str, Enum):
    SPEED = "speed"
    SIZE = "size"
    REVERSAL = "reversal"


class DataConfig(ConfigSection):
    grayscale: bool = Field(default=True, description="Convert frames to one channel")


class SynthConfig(ConfigSection):
    """Desk-scale synthetic dataset of moving rectangles."""

    synth_train_videos: int = Field(default=8, ge=1)
    synth_test_videos: int = Field(default=4, ge=1)
    synth_frames: int = Field(default=80, ge=8)
    synth_size: int = Field(default=64, ge=16)
    synth_sprites: int = Field(default=3, ge=1)
    synth_max_speed: float = Field(default=1.5, gt=0, description="px per frame")
    synth_anomaly_kinds: List[AnomalyKind] = [AnomalyKind.SPEED, AnomalyKind.SIZE]
    synth_anomaly_length: int = Field(default=16, ge=1)

    _split_kinds = validator("synth_anomaly_kinds", pre=True, allow_reuse=True)(
        split_csv
    )


class VideoEntry(BaseModel):
    video_id: str
    frames: List[Path]
    labels: Optional[List[int]] = None


class DatasetManifest(BaseModel):
    root: Path
    split: Split
    videos: List[VideoEntry]

    @property
    def frame_count(self) -> int:
        return sum(len(video.frames) for video in self.videos)


class PathsConfig(ConfigSection):
    """Run inputs and outputs; each has a command line flag of the same meaning."""

    data_dir: Optional[Path] = Field(default=None, description="Dataset root (--data)")
    out_dir: Optional[Path] = Field(default=None, description="Output directory (--out)")
    checkpoint: Optional[Path] = Field(default=None, description="--checkpoint")
    frames_dir: Optional[Path] = Field(
        default=None, description="Frames of one video to score (--frames)"
    )
