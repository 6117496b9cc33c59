"""Tests for dataset loading, normalization and clip windowing"""
import cv2
import numpy as np
import pytest
import torch
from structlog.testing import capture_logs

from stvad.data import (
    ClipDataset,
    DatasetError,
    LabelMismatchError,
    load_dataset,
    load_video,
    make_clips,
    make_loader,
    normalize_frame,
    read_frame,
    stack_clips,
)
from stvad.schemas import Split


def write_video(directory, count, size=8, value=None):
    directory.mkdir(parents=True)
    rng = np.random.default_rng(count)
    for index in range(count):
        if value is None:
            frame = rng.integers(0, 256, size=(size, size), dtype=np.uint8)
        else:
            frame = np.full((size, size), value, dtype=np.uint8)
        cv2.imwrite(str(directory / f"{index:04d}.png"), frame)


@pytest.fixture
def dataset_tree(tmp_path):
    """2 train videos and 2 labeled test videos of 8 frames each."""
    for split in ("train", "test"):
        for video_id in ("b", "a"):
            write_video(tmp_path / split / video_id, 8)
    (tmp_path / "test_labels").mkdir()
    for video_id in ("a", "b"):
        (tmp_path / "test_labels" / f"{video_id}.csv").write_text("0\n" * 6 + "1\n" * 2)
    return tmp_path


def test_load_dataset_enumerates_in_order(dataset_tree):
    manifest = load_dataset(dataset_tree, "train")
    assert manifest.split == Split.TRAIN
    assert [video.video_id for video in manifest.videos] == ["a", "b"]
    assert manifest.frame_count == 16
    for video in manifest.videos:
        names = [path.name for path in video.frames]
        assert names == sorted(names)
        assert video.labels is None


def test_load_dataset_reads_labels(dataset_tree):
    manifest = load_dataset(dataset_tree, Split.TEST)
    assert manifest.videos[0].labels == [0] * 6 + [1] * 2


def test_train_split_without_labels(tmp_path):
    write_video(tmp_path / "train" / "v", 4)
    (tmp_path / "test_labels").mkdir()
    manifest = load_dataset(tmp_path, "train")
    assert len(manifest.videos) == 1


def test_label_count_mismatch_names_video(tmp_path):
    write_video(tmp_path / "test" / "street", 10)
    (tmp_path / "test_labels").mkdir()
    (tmp_path / "test_labels" / "street.csv").write_text("0\n" * 9)
    with pytest.raises(LabelMismatchError, match="'street' has 10 frames but 9 labels"):
        load_dataset(tmp_path, "test")


def test_bad_label_value(tmp_path):
    write_video(tmp_path / "test" / "v", 2)
    (tmp_path / "test_labels").mkdir()
    (tmp_path / "test_labels" / "v.csv").write_text("0\n2\n")
    with pytest.raises(DatasetError, match="expected 0 or 1"):
        load_dataset(tmp_path, "test")


def test_missing_split(tmp_path):
    with pytest.raises(DatasetError, match="Missing split directory"):
        load_dataset(tmp_path, "test")


def test_unreadable_frame(tmp_path):
    path = tmp_path / "broken.png"
    path.write_bytes(b"not a png")
    with pytest.raises(DatasetError, match="Unreadable"):
        read_frame(path)


def test_sixteen_bit_frame_is_rejected(tmp_path):
    path = tmp_path / "deep.png"
    assert cv2.imwrite(str(path), np.full((4, 4), 40000, dtype=np.uint16))
    with pytest.raises(DatasetError, match="8-bit image, got uint16"):
        read_frame(path)


def test_eight_bit_frame_is_read(tmp_path):
    path = tmp_path / "plain.png"
    assert cv2.imwrite(str(path), np.full((4, 4), 200, dtype=np.uint8))
    image = read_frame(path)
    assert image.dtype == np.uint8
    assert image.shape == (4, 4)


def test_normalize_frame_endpoints():
    raw = np.array([[0, 255], [255, 0]], dtype=np.uint8)
    frame = normalize_frame(raw, (2, 2))
    assert frame.shape == (2, 2, 1)
    assert frame[:, :, 0].tolist() == [[-1.0, 1.0], [1.0, -1.0]]


def test_normalize_frame_midpoint():
    frame = normalize_frame(np.full((2, 2), 127.5), (2, 2))
    assert np.allclose(frame, 0.0)


def test_normalize_constant_image_resizes_to_constant():
    frame = normalize_frame(np.full((32, 24), 100, dtype=np.uint8), (16, 16))
    assert frame.shape == (16, 16, 1)
    assert np.allclose(frame, 100 / 127.5 - 1)


def test_normalize_frame_channels():
    color = np.zeros((4, 4, 3), dtype=np.uint8)
    assert normalize_frame(color, (4, 4), grayscale=True).shape == (4, 4, 1)
    assert normalize_frame(color, (4, 4), grayscale=False).shape == (4, 4, 3)
    gray = np.zeros((4, 4), dtype=np.uint8)
    assert normalize_frame(gray, (4, 4), grayscale=False).shape == (4, 4, 3)


def test_load_video_range(dataset_tree):
    video = load_dataset(dataset_tree, "train").videos[0]
    frames = load_video(video, (8, 8))
    assert frames.shape == (8, 8, 8, 1)
    assert frames.dtype == np.float32
    assert frames.min() >= -1.0
    assert frames.max() <= 1.0


def test_make_clips_count():
    frames = np.zeros((10, 4, 4, 1), dtype=np.float32)
    assert len(make_clips(frames, 5)) == 5


def test_make_clips_short_video_is_skipped():
    frames = np.zeros((5, 4, 4, 1), dtype=np.float32)
    with capture_logs() as cap_logs:
        clips = make_clips(frames, 5, "short")
    assert clips == []
    assert cap_logs[0]["log_level"] == "warning"
    assert cap_logs[0]["video_id"] == "short"


def test_make_clips_constant_difference():
    frames = np.stack(
        [np.full((2, 2, 1), value, dtype=np.float32) for value in (0.2, 0.5, 0.5)]
    )
    (clip,) = make_clips(frames, 2)
    assert np.allclose(clip.input_diffs, 0.3)
    assert np.allclose(clip.target_diff, 0.0)
    assert clip.end_frame_index == 2


def test_make_clips_recomputed_diffs():
    rng = np.random.default_rng(0)
    frames = rng.uniform(-1, 1, size=(12, 4, 4, 1)).astype(np.float32)
    t = 5
    clips = make_clips(frames, t, "v")
    assert len(clips) == 12 - t
    for j, clip in enumerate(clips):
        assert clip.input_frames.shape == (t - 1, 4, 4, 1)
        for i in range(t - 1):
            frame = j + 1 + i
            assert np.array_equal(clip.input_frames[i], frames[frame])
            assert np.array_equal(clip.input_diffs[i], frames[frame] - frames[frame - 1])
        assert np.array_equal(clip.target_frame, frames[j + t])
        assert np.array_equal(clip.target_diff, frames[j + t] - frames[j + t - 1])
        assert clip.end_frame_index == j + t
        assert np.abs(clip.input_diffs).max() <= 2.0


def test_make_clips_rejects_short_length():
    with pytest.raises(ValueError, match="at least 2"):
        make_clips(np.zeros((4, 2, 2, 1), dtype=np.float32), 1)


def test_clip_dataset_is_channels_first():
    frames = np.zeros((6, 4, 4, 1), dtype=np.float32)
    dataset = ClipDataset(make_clips(frames, 3))
    item = dataset[0]
    assert item["frames"].shape == (2, 1, 4, 4)
    assert item["diffs"].shape == (2, 1, 4, 4)
    assert item["target_frame"].shape == (1, 4, 4)
    batch = stack_clips(dataset.clips[:2])
    assert batch["frames"].shape == (2, 2, 1, 4, 4)
    assert batch["end_frame_index"].tolist() == [3, 4]


def test_loader_order_depends_on_seed():
    frames = np.arange(20, dtype=np.float32).reshape(20, 1, 1, 1)
    dataset = ClipDataset(make_clips(frames, 2))

    def order(seed):
        loader, _ = make_loader(dataset, batch_size=4, seed=seed)
        return torch.cat([batch["end_frame_index"] for batch in loader]).tolist()

    assert order(3) == order(3)
    assert sorted(order(3)) == list(range(2, 20))
    assert order(3) != order(4)
