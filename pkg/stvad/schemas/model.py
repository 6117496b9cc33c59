from enum import Enum
from typing import List, Tuple

from pydantic import Field, root_validator, validator

from .base import ConfigSection, split_csv


class ShiftMode(str, Enum):
    BIDIRECTIONAL = "bidirectional"
    UNIDIRECTIONAL = "unidirectional"


class FusionMode(str, Enum):
    MEAN_MOTION_COMPENSATED = "mean_motion_compensated"
    LITERAL_SUM = "literal_sum"
    SPATIAL = "spatial"
    TEMPORAL = "temporal"


class BlockParams(ConfigSection):
    """Hyperparameters shared by the RTSM and RCAM blocks."""

    leaky_slope: float = Field(
        default=0.2, gt=0, lt=1, description="Negative slope of the leaky rectifier"
    )
    reduction_ratio: int = Field(
        default=16, ge=1, description="Channel reduction ratio r inside the CAB"
    )
    shift_fraction: float = Field(
        default=0.125,
        ge=0,
        le=0.5,
        description="Fraction of channels shifted per temporal direction",
    )
    shift_mode: ShiftMode = ShiftMode.BIDIRECTIONAL
    conv_batchnorm: bool = Field(
        default=True,
        description="Insert batch normalization between the two convs of the RCAM conv block",
    )


class ModelConfig(BlockParams):
    """Architecture of the two subnetworks."""

    input_size: Tuple[int, int] = Field(default=(64, 64), description="(H, W) in px")
    image_channels: int = Field(default=1, ge=1)
    clip_len: int = Field(
        default=5, ge=2, description="t; the subnetworks see t-1 inputs"
    )
    levels: int = Field(default=4, ge=1)
    channels: List[int] = Field(default=[32, 64, 128, 256])
    memory_items: int = Field(default=20, ge=3, description="M items per memory module")
    fusion_mode: FusionMode = FusionMode.MEAN_MOTION_COMPENSATED
    use_rtsm: bool = True
    use_rcam: bool = True
    use_memory: bool = True

    _split_lists = validator("input_size", "channels", pre=True, allow_reuse=True)(
        split_csv
    )

    @validator("channels", each_item=True)
    def positive_channels(cls, value):  # pylint: disable=no-self-argument
        if value < 1:
            raise ValueError("channel counts must be positive")
        return value

    @root_validator(skip_on_failure=True)
    def check_topology(cls, values):  # pylint: disable=no-self-argument
        levels = values["levels"]
        channels = values["channels"]
        height, width = values["input_size"]
        if len(channels) != levels:
            raise ValueError(
                f"channels lists {len(channels)} entries but levels is {levels}"
            )
        factor = 2 ** levels
        if height % factor or width % factor:
            raise ValueError(
                f"input_size {height}x{width} is not divisible by 2**levels = {factor}"
            )
        ratio = values["reduction_ratio"]
        if values.get("use_rcam", True):
            for count in channels:
                if count % ratio:
                    raise ValueError(
                        f"reduction_ratio {ratio} does not divide channel count {count}"
                    )
        return values

    @property
    def num_inputs(self) -> int:
        return self.clip_len - 1

    def block_params(self) -> BlockParams:
        return BlockParams.from_flat(self)
