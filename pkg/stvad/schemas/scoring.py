from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field

from .base import ConfigSection


class PsnrConvention(str, Enum):
    PAPER = "paper"
    STANDARD = "standard"


class NormalizationScope(str, Enum):
    VIDEO = "video"
    GLOBAL = "global"


class DistanceScope(str, Enum):
    BOTTLENECK = "bottleneck"
    ALL = "all"


class ScoreConfig(ConfigSection):
    """How per-frame anomaly scores are assembled."""

    lam: float = Field(default=0.8, ge=0, le=1, description="PSNR weight lambda")
    psnr_convention: PsnrConvention = PsnrConvention.PAPER
    normalization_scope: NormalizationScope = NormalizationScope.VIDEO
    distance_scope: DistanceScope = DistanceScope.BOTTLENECK
    eval_batch_size: int = Field(default=16, ge=1)
    export_error_maps: bool = False


class ScoreRecord(BaseModel):
    """One frame of a ScoreSeries. Warm-up frames carry no PSNR or distances."""

    frame_index: int
    psnr: Optional[float] = None
    d_spatial: Optional[float] = Field(default=None, ge=0)
    d_temporal: Optional[float] = Field(default=None, ge=0)
    fused_score: float = Field(ge=0, le=1)
    label: Optional[int] = Field(default=None, ge=0, le=1)


class ScoreSeries(BaseModel):
    video_id: str
    records: List[ScoreRecord]

    @property
    def scores(self) -> List[float]:
        return [record.fused_score for record in self.records]

    @property
    def labels(self) -> Optional[List[int]]:
        labels = [record.label for record in self.records]
        if any(label is None for label in labels):
            return None
        return labels


class EvalReport(BaseModel):
    series: List[ScoreSeries]
    frame_auc: Optional[float] = Field(default=None, ge=0, le=1)
    anomalous_above_median: Optional[float] = None
    runtime: Dict[str, float] = {}
