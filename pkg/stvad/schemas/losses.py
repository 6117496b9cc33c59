from enum import Enum

from pydantic import Field, validator

from .base import ConfigSection


class Reduction(str, Enum):
    MEAN = "mean"
    SUM = "sum"


class LossWeights(ConfigSection):
    """Weights and margins of the training objective."""

    alpha_s: float = Field(default=0.1, ge=0, description="Spatial L_s weight")
    beta_s: float = Field(default=0.1, ge=0, description="Temporal L_s weight")
    gamma_i: float = Field(
        default=0.5, ge=0, le=1, description="Spatial objective weight"
    )
    margin_a: float = Field(default=2.0, ge=0)
    margin_b: float = Field(default=1.0, ge=0)
    hinge: bool = Field(
        default=True, description="Clamp each discretization term at zero"
    )
    square_pair_distance: bool = Field(
        default=False,
        description="Square the distance between the second and third nearest items",
    )
    prediction_reduction: Reduction = Reduction.MEAN
    use_discretization: bool = True

    @validator("margin_a", "margin_b")
    def finite_margin(cls, value):  # pylint: disable=no-self-argument
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError("margins must be finite")
        return value

    @property
    def gamma_x(self) -> float:
        return 1.0 - self.gamma_i
