"""Tests for training and evaluation metrics"""
from unittest.mock import patch

import pytest
from prometheus_client import CollectorRegistry

from stvad.metrics import RunMetricService


@pytest.fixture
def registry():
    return CollectorRegistry()


def sample(registry, name, **labels):
    labels.setdefault("run", "stvad")
    return registry.get_sample_value(name, labels)


def test_observe_step(registry):
    service = RunMetricService(registry)
    losses = {"lp1": 0.5, "ls1": 0.1, "total": 0.9}
    service.observe_step(losses, lr=1e-3, duration_s=0.2)
    service.observe_step({**losses, "total": 0.7}, lr=5e-4, duration_s=0.3)

    assert sample(registry, "stvad_train_steps_total") == 2
    assert sample(registry, "stvad_train_loss", component="total") == 0.7
    assert sample(registry, "stvad_train_loss", component="lp1") == 0.5
    assert sample(registry, "stvad_train_learning_rate") == 5e-4
    assert sample(registry, "stvad_train_step_duration_count") == 2
    assert sample(registry, "stvad_train_step_duration_sum") == pytest.approx(0.5)


def test_gauge_evaluation(registry):
    service = RunMetricService(registry, run_name="tiny")
    service.gauge_evaluation(0.75, fps=120.0)
    assert sample(registry, "stvad_eval_frame_auc", run="tiny") == 0.75
    assert sample(registry, "stvad_eval_fps", run="tiny") == 120.0


def test_gauge_evaluation_without_auc(registry):
    service = RunMetricService(registry)
    service.gauge_evaluation(None, fps=10.0)
    assert sample(registry, "stvad_eval_frame_auc") is None
    assert sample(registry, "stvad_eval_fps") == 10.0


def test_push_without_gateway_is_noop(registry):
    service = RunMetricService(registry)
    with patch("stvad.metrics.push_to_gateway") as mock_push:
        service.push_to_gateway()
    mock_push.assert_not_called()


def test_push_to_gateway(registry):
    service = RunMetricService(registry, "localhost:9091")
    with patch("stvad.metrics.push_to_gateway") as mock_push:
        service.push_to_gateway()
    mock_push.assert_called_once_with("localhost:9091", job="stvad", registry=registry)


def test_push_failure_is_logged(registry, caplog):
    service = RunMetricService(registry, "localhost:9091")
    with patch(
        "stvad.metrics.push_to_gateway", side_effect=OSError("connection refused")
    ):
        service.push_to_gateway()
    assert "Could not push metrics to localhost:9091" in caplog.text
