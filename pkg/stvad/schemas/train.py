from typing import Optional

from pydantic import Field

from .base import ConfigSection


class TrainConfig(ConfigSection):
    """Optimizer, schedule and loop settings."""

    seed: int = 0
    epochs: int = Field(default=5, ge=1)
    batch_size: int = Field(default=8, ge=1)
    learning_rate: float = Field(
        default=2e-4, gt=0, description="Initial rate; 2e-5 at full scale"
    )
    min_learning_rate: float = Field(default=0.0, ge=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.999, ge=0, lt=1)
    max_steps: Optional[int] = Field(
        default=None, ge=1, description="Run exactly this many steps, cycling epochs"
    )
    checkpoint_every: int = Field(default=1, ge=1, description="In epochs")
    num_workers: int = Field(default=0, ge=0)
    device: str = "cpu"
