from typing import Type

from .base import ConfigSection, SectionT
from .data import DataConfig, PathsConfig, SynthConfig
from .losses import LossWeights
from .model import ModelConfig
from .scoring import ScoreConfig
from .train import TrainConfig


class RunConfig(
    ModelConfig,
    LossWeights,
    TrainConfig,
    ScoreConfig,
    DataConfig,
    SynthConfig,
    PathsConfig,
):
    """Every tunable of a run in one flat key space."""

    class Config(ConfigSection.Config):
        extra = "forbid"

    def section(self, cls: Type[SectionT]) -> SectionT:
        return cls.from_flat(self)  # type: ignore[attr-defined]
