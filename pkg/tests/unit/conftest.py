"""pytest fixtures for stvad"""
from unittest import mock

import pytest
import torch
from prometheus_client import CollectorRegistry

from stvad.config import Settings
from stvad.metrics import RunMetricService
from stvad.network import build_model
from stvad.schemas import ModelConfig, RunConfig, SynthConfig
from stvad.synth import synth_generate

# A 2-level 16x16 network small enough for finite differences
TINY_MODEL = {
    "input_size": (16, 16),
    "levels": 2,
    "channels": [8, 16],
    "reduction_ratio": 4,
    "memory_items": 5,
    "clip_len": 3,
}

TINY_RUN = {
    **TINY_MODEL,
    "epochs": 1,
    "batch_size": 4,
    "eval_batch_size": 4,
    "learning_rate": 1e-3,
    "synth_train_videos": 2,
    "synth_test_videos": 2,
    "synth_frames": 12,
    "synth_size": 16,
    "synth_sprites": 1,
    "synth_anomaly_length": 4,
}


@pytest.fixture
def settings():
    return Settings()


@pytest.fixture
def tiny_model_config():
    return ModelConfig(**TINY_MODEL)


@pytest.fixture
def tiny_run_config():
    return RunConfig(**TINY_RUN)


@pytest.fixture
def tiny_model(tiny_model_config):
    model = build_model(tiny_model_config, seed=0)
    model.eval()
    return model


@pytest.fixture
def tiny_batch(tiny_model_config):
    """A random batch of two clips, channels-first, in the data value ranges."""
    generator = torch.Generator().manual_seed(0)
    steps = tiny_model_config.num_inputs
    height, width = tiny_model_config.input_size
    frames = torch.rand(2, steps + 2, 1, height, width, generator=generator) * 2 - 1
    diffs = frames[:, 1:] - frames[:, :-1]
    return {
        "frames": frames[:, 1 : steps + 1].contiguous(),
        "diffs": diffs[:, :steps].contiguous(),
        "target_frame": frames[:, steps + 1].contiguous(),
        "target_diff": diffs[:, steps].contiguous(),
    }


@pytest.fixture
def synth_root(tmp_path, tiny_run_config):
    root = tmp_path / "synth"
    synth_generate(root, tiny_run_config.section(SynthConfig), seed=0)
    return root


@pytest.fixture
def metric_service():
    """Return a RunMetricService with push_to_gateway mocked."""
    service = RunMetricService(CollectorRegistry(), "https://push.example.com")
    with mock.patch("stvad.metrics.RunMetricService.push_to_gateway"):
        yield service
