"""Tests for the stvad command line"""
from unittest import mock

import pytest

from stvad.cli import run_cli
from stvad.config import Settings, read_config_file
from stvad.pipeline import REPORT_NAME

TINY_CONFIG = """\
# tiny network for quick runs
input_size = 16,16
levels = 2
channels = 8,16
reduction_ratio = 4
memory_items = 5
clip_len = 3
epochs = 1
batch_size = 4
learning_rate = 0.001
synth_train_videos = 2
synth_test_videos = 2
synth_frames = 12
synth_size = 16
synth_sprites = 1
synth_anomaly_length = 4
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "tiny.cfg"
    path.write_text(TINY_CONFIG)
    return path


def test_unknown_subcommand():
    assert run_cli(["foo"]) == 2


def test_missing_subcommand():
    assert run_cli([]) == 2


def test_unknown_flag(tmp_path):
    assert run_cli(["synth", "--out", str(tmp_path), "--bogus"]) == 2


def test_help_exits_zero(capsys):
    assert run_cli(["--help"]) == 0
    assert "synth" in capsys.readouterr().out


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("alpha_x = 0.1\n")
    code = run_cli(["train", "--config", str(path), "--data", str(tmp_path), "--out", str(tmp_path)])
    assert code == 2
    assert "alpha_x" in capsys.readouterr().err


def test_invalid_config_value(tmp_path, capsys):
    path = tmp_path / "bad.cfg"
    path.write_text("levels = 3\n")
    assert run_cli(["synth", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert "levels" in capsys.readouterr().err


def test_missing_config_file(tmp_path, capsys):
    missing = tmp_path / "missing.cfg"
    assert run_cli(["synth", "--config", str(missing), "--out", str(tmp_path)]) == 2
    assert "missing.cfg" in capsys.readouterr().err


def test_bad_set_syntax(tmp_path):
    assert run_cli(["synth", "--out", str(tmp_path), "--set", "seed"]) == 2


def test_train_missing_data_names_path(tmp_path, config_file, capsys):
    missing = tmp_path / "nowhere"
    code = run_cli(
        ["train", "--config", str(config_file), "--data", str(missing), "--out", str(tmp_path)]
    )
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_eval_missing_checkpoint(tmp_path, capsys):
    missing = tmp_path / "none.pt"
    code = run_cli(
        ["eval", "--checkpoint", str(missing), "--data", str(tmp_path), "--out", str(tmp_path)]
    )
    assert code == 2
    assert "none.pt" in capsys.readouterr().err


def test_synth_writes_dataset_and_effective_config(tmp_path, config_file):
    out = tmp_path / "data"
    assert run_cli(["synth", "--config", str(config_file), "--out", str(out), "--seed", "3"]) == 0
    assert (out / "train" / "00" / "0000.png").is_file()
    assert (out / "test_labels" / "01.csv").is_file()
    effective = read_config_file(out / "effective_config.cfg")
    assert effective["seed"] == "3"
    assert effective["synth_frames"] == "12"


def test_seed_from_environment(tmp_path, config_file, monkeypatch):
    monkeypatch.setenv("STVAD_SEED", "7")
    out = tmp_path / "data"
    assert run_cli(["synth", "--config", str(config_file), "--out", str(out)], Settings()) == 0
    assert read_config_file(out / "effective_config.cfg")["seed"] == "7"


def test_runtime_failure_exits_one(tmp_path, config_file):
    with mock.patch("stvad.cli.synth_generate", side_effect=RuntimeError("disk on fire")):
        code = run_cli(["synth", "--config", str(config_file), "--out", str(tmp_path)])
    assert code == 1


def test_synth_train_eval_score(tmp_path, config_file, capsys):
    data = tmp_path / "data"
    run = tmp_path / "run"
    evaluation = tmp_path / "eval"
    assert run_cli(["synth", "--config", str(config_file), "--out", str(data)]) == 0
    assert (
        run_cli(["train", "--config", str(config_file), "--data", str(data), "--out", str(run)])
        == 0
    )
    assert (run / "effective_config.cfg").is_file()
    assert (run / "loss_log.csv").is_file()

    checkpoint = str(run / "checkpoint.pt")
    code = run_cli(
        ["eval", "--checkpoint", checkpoint, "--data", str(data), "--out", str(evaluation)]
    )
    assert code == 0
    assert "frame_auc=" in (evaluation / REPORT_NAME).read_text()
    assert (evaluation / "scores" / "00.csv").is_file()

    capsys.readouterr()
    code = run_cli(["score", "--checkpoint", checkpoint, "--frames", str(data / "test" / "00")])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "frame,psnr,d_spatial,d_temporal,score,label"
    assert len(lines) == 13


def test_eval_rejects_architecture_override(tmp_path, config_file):
    data = tmp_path / "data"
    run = tmp_path / "run"
    run_cli(["synth", "--config", str(config_file), "--out", str(data)])
    run_cli(["train", "--config", str(config_file), "--data", str(data), "--out", str(run)])
    code = run_cli(
        [
            "eval",
            "--checkpoint",
            str(run / "checkpoint.pt"),
            "--data",
            str(data),
            "--out",
            str(tmp_path / "eval"),
            "--set",
            "memory_items=9",
        ]
    )
    assert code == 2
