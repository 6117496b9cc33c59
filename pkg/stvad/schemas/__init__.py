from .base import ConfigSection
from .data import (
    AnomalyKind,
    DataConfig,
    DatasetManifest,
    PathsConfig,
    Split,
    SynthConfig,
    VideoEntry,
)
from .losses import LossWeights, Reduction
from .model import BlockParams, FusionMode, ModelConfig, ShiftMode
from .run import RunConfig
from .scoring import (
    DistanceScope,
    EvalReport,
    NormalizationScope,
    PsnrConvention,
    ScoreConfig,
    ScoreRecord,
    ScoreSeries,
)
from .train import TrainConfig
