"""Process settings and flat config files."""

import os
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Union

from pydantic import BaseSettings

from stvad.schemas import RunConfig


class LogLevel(str, Enum):
    CRITICAL = "CRITICAL"
    ERROR = "ERROR"
    WARNING = "WARNING"
    INFO = "INFO"
    DEBUG = "DEBUG"


class Settings(BaseSettings):
    seed: Optional[int] = None
    use_mozlog: bool = False
    logging_level: LogLevel = LogLevel.INFO
    sentry_debug: bool = False
    prometheus_pushgateway_url: Optional[str] = None

    class Config:
        # The attributes of this class extract from the Env Var's that are `(prefix)(attr_name)` within the environment
        env_prefix = "stvad_"


class ConfigurationError(ValueError):
    """A model, memory or run configuration that cannot be built."""


class UnknownConfigKeyError(ConfigurationError):
    """A config file or override names a key that RunConfig does not define."""

    def __init__(self, key, source=None, *args, **kwargs):
        self.key = key
        self.source = source
        super().__init__(*args, **kwargs)

    def __str__(self):
        where = f" in {self.source}" if self.source else ""
        return f"Unknown config key {self.key!r}{where}."

    def __repr__(self):
        return f"{self.__class__.__name__}({self.key!r}, {self.source!r})"


def parse_config_lines(lines: Iterable[str], source: str = None) -> Dict[str, str]:
    """
    Parse ``key = value`` lines into a dict of raw strings.

    Blank lines and ``#`` comments are skipped. A line without ``=`` is a
    ConfigurationError naming the line number.
    """
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(
                f"{source or 'config'}:{lineno}: expected 'key = value', got {raw.strip()!r}"
            )
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def read_config_file(path: Union[str, Path]) -> Dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf8") as config_file:
        return parse_config_lines(config_file, source=str(path))


def check_keys(values: Mapping[str, Any], source: str = None) -> None:
    known = set(RunConfig.__fields__)
    for key in values:
        if key not in known:
            raise UnknownConfigKeyError(key, source)


def load_run_config(
    path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    settings: Optional[Settings] = None,
    base: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """
    Build the effective RunConfig.

    Precedence is overrides (command line flags) > config file > base (such as
    a checkpoint's config snapshot) > STVAD_SEED > field defaults.
    """
    values: Dict[str, Any] = {}
    if settings is not None and settings.seed is not None:
        values["seed"] = settings.seed
    if base:
        values.update(base)
    if path is not None:
        from_file = read_config_file(path)
        check_keys(from_file, str(path))
        values.update(from_file)
    if overrides:
        check_keys(overrides, "command line")
        values.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig(**values)


def format_value(value: Any) -> str:
    if isinstance(value, (list, tuple)):
        return ",".join(format_value(item) for item in value)
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def dump_config(config: RunConfig) -> str:
    """Render a RunConfig in the flat file format, one sorted key per line."""
    lines: List[str] = ["# effective stvad configuration"]
    for key, value in sorted(config.dict().items()):
        if value is None:
            continue
        lines.append(f"{key} = {format_value(value)}")
    return "\n".join(lines) + "\n"


def write_effective_config(config: RunConfig, out_dir: Union[str, Path]) -> Path:
    out_path = Path(out_dir) / "effective_config.cfg"
    os.makedirs(out_path.parent, exist_ok=True)
    with open(out_path, "w", encoding="utf8") as config_file:
        config_file.write(dump_config(config))
    return out_path
