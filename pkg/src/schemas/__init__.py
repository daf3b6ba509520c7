from .model_schemas import (
    BlockKind,
    Normalization,
    RSUConfig,
    ModelConfig,
)
from .task_schemas import (
    TaskKind,
    BaseLoss,
    TASK_NUM_CLASSES,
    TaskSpec,
    LossConfig,
    LabelMapping,
)
from .data_schemas import (
    RawSample,
    ChannelStats,
    SampleRef,
    DatasetIndex,
    FoldSplit,
    PadIfNeeded,
    RandomCrop,
    HorizontalFlip,
    VerticalFlip,
    AugmentStep,
    SynthSpec,
)
from .train_schemas import (
    SplitMode,
    Device,
    TrainConfig,
    EpochRecord,
    TrainHistory,
)
from .report_schemas import (
    ConfusionCounts,
    ImageScore,
    GroupScore,
    ReportSettings,
    MetricReport,
    PredictionRecord,
)

__all__ = [
    # Model
    "BlockKind",
    "Normalization",
    "RSUConfig",
    "ModelConfig",
    # Tasks and loss
    "TaskKind",
    "BaseLoss",
    "TASK_NUM_CLASSES",
    "TaskSpec",
    "LossConfig",
    "LabelMapping",
    # Data
    "RawSample",
    "ChannelStats",
    "SampleRef",
    "DatasetIndex",
    "FoldSplit",
    "PadIfNeeded",
    "RandomCrop",
    "HorizontalFlip",
    "VerticalFlip",
    "AugmentStep",
    "SynthSpec",
    # Training
    "SplitMode",
    "Device",
    "TrainConfig",
    "EpochRecord",
    "TrainHistory",
    # Reports
    "ConfusionCounts",
    "ImageScore",
    "GroupScore",
    "ReportSettings",
    "MetricReport",
    "PredictionRecord",
]
