"""
Command line entry point.

    stvad synth --out DIR [--seed N]
    stvad train --config FILE --data DIR --out DIR
    stvad eval --checkpoint FILE --data DIR --out DIR
    stvad score --checkpoint FILE --frames DIR > scores.csv

Every flag maps to a config key; ``--set key=value`` reaches the others.
Exit codes: 0 success, 2 usage or configuration error, 1 runtime failure.
"""

import argparse
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import structlog
from prometheus_client import CollectorRegistry
from pydantic import ValidationError

from stvad.config import (
    ConfigurationError,
    Settings,
    check_keys,
    load_run_config,
    read_config_file,
    write_effective_config,
)
from stvad.data import DatasetError
from stvad.exception_capture import init_sentry
from stvad.log import configure_logging
from stvad.metrics import RunMetricService
from stvad.pipeline import (
    CheckpointError,
    evaluate,
    load_checkpoint,
    score_video,
    train,
    write_score_csv,
)
from stvad.schemas import RunConfig, SynthConfig
from stvad.synth import synth_generate

logger = structlog.get_logger("stvad.cli")

FLAG_KEYS = {
    "seed": "seed",
    "data": "data_dir",
    "out": "out_dir",
    "checkpoint": "checkpoint",
    "frames": "frames_dir",
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stvad", description="Video anomaly detection by future frame prediction."
    )
    subparsers = parser.add_subparsers(dest="command", required=True)

    def add_command(name, help_text, flags):
        sub = subparsers.add_parser(name, help=help_text)
        sub.add_argument("--config", help="flat key = value config file")
        sub.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key (repeatable)",
        )
        for flag, help_flag in flags:
            if flag == "seed":
                sub.add_argument("--seed", type=int, help=help_flag)
            else:
                sub.add_argument(f"--{flag}", help=help_flag)
        return sub

    add_command(
        "synth",
        "generate the synthetic dataset",
        [("out", "dataset root to write"), ("seed", "generator seed")],
    )
    add_command(
        "train",
        "train a model",
        [
            ("data", "dataset root"),
            ("out", "output directory"),
            ("seed", "training seed"),
        ],
    )
    add_command(
        "eval",
        "score the test split and write the report",
        [
            ("checkpoint", "checkpoint file"),
            ("data", "dataset root"),
            ("out", "output directory"),
        ],
    )
    add_command(
        "score",
        "score one unlabeled video to CSV on standard output",
        [("checkpoint", "checkpoint file"), ("frames", "folder of PNG frames")],
    )
    return parser


def parse_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigurationError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    check_keys(overrides, "command line")
    return overrides


def require(config: RunConfig, key: str, flag: str) -> Path:
    value = getattr(config, key)
    if value is None:
        raise ConfigurationError(f"{flag} (or '{key}' in the config file) is required")
    return Path(value)


def require_existing(config: RunConfig, key: str, flag: str) -> Path:
    path = require(config, key, flag)
    if not path.exists():
        raise FileNotFoundError(f"No such file or directory: {path}")
    return path


def checkpoint_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """Values layered over a checkpoint's config: config file, then flags."""
    values: Dict[str, Any] = {}
    if args.config:
        values.update(read_config_file(args.config))
        check_keys(values, args.config)
    values.update(parse_overrides(args))
    return values


def cmd_synth(args, settings):
    config = load_run_config(args.config, parse_overrides(args), settings)
    out_dir = require(config, "out_dir", "--out")
    synth_generate(out_dir, config.section(SynthConfig), config.seed)
    write_effective_config(config, out_dir)


def cmd_train(args, settings):
    config = load_run_config(args.config, parse_overrides(args), settings)
    data_dir = require_existing(config, "data_dir", "--data")
    out_dir = require(config, "out_dir", "--out")
    write_effective_config(config, out_dir)
    metric_service = RunMetricService(
        CollectorRegistry(), settings.prometheus_pushgateway_url
    )
    train(config, data_dir, out_dir, metric_service)


def cmd_eval(args, settings):
    overrides = checkpoint_overrides(args)
    checkpoint = require_existing(RunConfig(**overrides), "checkpoint", "--checkpoint")
    state = load_checkpoint(checkpoint, overrides)
    data_dir = require_existing(state.config, "data_dir", "--data")
    out_dir = require(state.config, "out_dir", "--out")
    write_effective_config(state.config, out_dir)
    metric_service = RunMetricService(
        CollectorRegistry(), settings.prometheus_pushgateway_url
    )
    evaluate(state, data_dir, out_dir, metric_service=metric_service)


def cmd_score(args, settings):  # pylint: disable=unused-argument
    overrides = checkpoint_overrides(args)
    checkpoint = require_existing(RunConfig(**overrides), "checkpoint", "--checkpoint")
    state = load_checkpoint(checkpoint, overrides)
    frames_dir = require_existing(state.config, "frames_dir", "--frames")
    write_score_csv(score_video(state, frames_dir), sys.stdout)


COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "eval": cmd_eval,
    "score": cmd_score,
}


def run_cli(argv: Optional[List[str]] = None, settings: Optional[Settings] = None):
    """
    Run one subcommand.

    argv - command line arguments, or None to read from sys.argv
    settings - process settings, or None to read them from the environment

    Return is 0 for success, 2 for usage or configuration errors, 1 for
    failures while running, appropriate for sys.exit()
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2

    try:
        settings = settings or Settings()
        COMMANDS[args.command](args, settings)
    except (
        ValidationError,
        ConfigurationError,
        FileNotFoundError,
        DatasetError,
        CheckpointError,
    ) as exc:
        logger.error("Invalid input", command=args.command, error=str(exc))
        print(f"stvad {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception:  # pylint: disable=broad-except
        logger.exception("Command failed", command=args.command)
        return 1
    return 0


def main():
    init_sentry()
    settings = Settings()
    configure_logging(settings.use_mozlog, settings.logging_level.value)
    sys.exit(run_cli(settings=settings))


if __name__ == "__main__":
    main()
