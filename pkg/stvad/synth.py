"""
Synthetic surveillance-like videos: bright rectangles walking over a dark
background. Test videos get one injected anomaly with exact frame labels.
"""

import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple, Union

import cv2
import numpy as np
import structlog

from stvad.data import LABELS_DIR
from stvad.schemas import AnomalyKind, Split, SynthConfig

logger = structlog.get_logger(__name__)

BACKGROUND = 20
SPEED_FACTOR = 4.0
SIZE_FACTOR = 2.5
REVERSAL_PERIOD = 2
# Sprite side lengths are drawn for a 64 px frame and scaled with the frame
MIN_SIDE = 5
MAX_SIDE = 9


@dataclass(frozen=True)
class AnomalyEvent:
    """An anomaly on frames ``start``..``end`` inclusive, applied to one sprite."""

    kind: AnomalyKind
    start: int
    end: int
    sprite: int = 0

    def active(self, frame: int) -> bool:
        return self.start <= frame <= self.end


@dataclass
class Sprite:
    position: np.ndarray
    velocity: np.ndarray
    size: np.ndarray
    brightness: int


def random_sprite(rng: np.random.Generator, frame_size: int, max_speed: float) -> Sprite:
    scale = frame_size / 64.0
    size = rng.uniform(MIN_SIDE, MAX_SIDE, size=2) * scale
    position = rng.uniform(0, frame_size - size)
    angle = rng.uniform(0, 2 * np.pi)
    speed = rng.uniform(0.5, 1.0) * max_speed
    velocity = speed * np.array([np.cos(angle), np.sin(angle)])
    brightness = int(rng.integers(180, 256))
    return Sprite(position, velocity, size, brightness)


def step_sprite(sprite: Sprite, velocity: np.ndarray, size: np.ndarray, frame_size: int):
    """Advance one frame, bouncing off the frame border."""
    position = sprite.position + velocity
    limit = frame_size - size
    for axis in range(2):
        if position[axis] < 0:
            position[axis] = -position[axis]
            sprite.velocity[axis] = -sprite.velocity[axis]
        elif position[axis] > limit[axis]:
            position[axis] = 2 * limit[axis] - position[axis]
            sprite.velocity[axis] = -sprite.velocity[axis]
    sprite.position = np.clip(position, 0, limit)


def draw(frame: np.ndarray, position: np.ndarray, size: np.ndarray, brightness: int):
    x0, y0 = np.round(position).astype(int)
    x1, y1 = np.round(position + size).astype(int) - 1
    cv2.rectangle(frame, (int(x0), int(y0)), (int(x1), int(y1)), int(brightness), -1)


def render_video(
    num_frames: int,
    frame_size: int,
    num_sprites: int,
    max_speed: float,
    rng: np.random.Generator,
    anomaly: Optional[AnomalyEvent] = None,
) -> Tuple[List[np.ndarray], List[int]]:
    """
    Render uint8 (H, W) frames and their 0/1 labels.

    A sprite's position at frame i is its position at i-1 plus the velocity
    in effect at frame i. During the anomaly interval the chosen sprite moves
    four times faster, grows 2.5 times, or flips direction every two frames.
    """
    sprites = [random_sprite(rng, frame_size, max_speed) for _ in range(num_sprites)]
    frames = []
    labels = []
    for index in range(num_frames):
        frame = np.full((frame_size, frame_size), BACKGROUND, dtype=np.uint8)
        abnormal = anomaly is not None and anomaly.active(index)
        for number, sprite in enumerate(sprites):
            size = sprite.size
            if abnormal and number == anomaly.sprite:
                if anomaly.kind == AnomalyKind.SIZE:
                    size = np.minimum(sprite.size * SIZE_FACTOR, frame_size - 1)
                elif anomaly.kind == AnomalyKind.REVERSAL:
                    if (index - anomaly.start) % REVERSAL_PERIOD == 0:
                        sprite.velocity = -sprite.velocity
            if index > 0:
                velocity = sprite.velocity
                if abnormal and number == anomaly.sprite:
                    if anomaly.kind == AnomalyKind.SPEED:
                        velocity = sprite.velocity * SPEED_FACTOR
                step_sprite(sprite, velocity.copy(), size, frame_size)
            draw(frame, sprite.position, size, sprite.brightness)
        frames.append(frame)
        labels.append(int(abnormal))
    return frames, labels


def pick_anomaly(
    rng: np.random.Generator, kind: AnomalyKind, config: SynthConfig
) -> AnomalyEvent:
    length = min(config.synth_anomaly_length, config.synth_frames // 2)
    # Leave room for a full input window before the anomaly starts
    earliest = min(8, config.synth_frames - length)
    start = int(rng.integers(earliest, config.synth_frames - length + 1))
    sprite = int(rng.integers(0, config.synth_sprites))
    return AnomalyEvent(kind=kind, start=start, end=start + length - 1, sprite=sprite)


def write_frames(video_dir: Path, frames: List[np.ndarray]) -> None:
    os.makedirs(video_dir, exist_ok=True)
    for index, frame in enumerate(frames):
        path = video_dir / f"{index:04d}.png"
        if not cv2.imwrite(str(path), frame):
            raise OSError(f"Could not write frame {path}")


def write_labels(path: Path, labels: List[int]) -> None:
    os.makedirs(path.parent, exist_ok=True)
    with open(path, "w", encoding="utf8") as label_file:
        label_file.write("".join(f"{label}\n" for label in labels))


def synth_generate(
    out_root: Union[str, Path], config: Optional[SynthConfig] = None, seed: int = 0
) -> List[Tuple[str, Optional[AnomalyEvent]]]:
    """
    Write a complete train/test dataset under ``out_root``.

    Test videos cycle through ``synth_anomaly_kinds``; with no kinds every
    test video is normal. Returns the anomaly injected in each test video.
    """
    config = config or SynthConfig()
    out_root = Path(out_root)
    rng = np.random.default_rng(seed)
    render_args = (
        config.synth_frames,
        config.synth_size,
        config.synth_sprites,
        config.synth_max_speed,
    )

    for number in range(config.synth_train_videos):
        frames, _ = render_video(*render_args, rng=rng)
        write_frames(out_root / Split.TRAIN.value / f"{number:02d}", frames)

    events: List[Tuple[str, Optional[AnomalyEvent]]] = []
    kinds = config.synth_anomaly_kinds
    for number in range(config.synth_test_videos):
        video_id = f"{number:02d}"
        event = None
        if kinds:
            event = pick_anomaly(rng, AnomalyKind(kinds[number % len(kinds)]), config)
        frames, labels = render_video(*render_args, rng=rng, anomaly=event)
        write_frames(out_root / Split.TEST.value / video_id, frames)
        write_labels(out_root / LABELS_DIR / f"{video_id}.csv", labels)
        events.append((video_id, event))

    logger.info(
        "Synthetic dataset written",
        root=str(out_root),
        seed=seed,
        train_videos=config.synth_train_videos,
        test_videos=config.synth_test_videos,
        frames=config.synth_frames,
    )
    return events
