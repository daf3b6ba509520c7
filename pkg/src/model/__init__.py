from .blocks import (
    ConvNormAct,
    ResidualBasicBlock,
    RSU,
    RSU4F,
    ResUNetpp,
    build_block,
    receptive_field,
)
from .network import (
    ConfigError,
    NestedUNet,
    build_model,
    default_model_config,
    parameter_count,
    validate_config,
)
from .checkpoint import (
    FORMAT_VERSION,
    CheckpointError,
    load_checkpoint,
    read_archive,
    save_checkpoint,
)

__all__ = [
    "ConvNormAct",
    "ResidualBasicBlock",
    "RSU",
    "RSU4F",
    "ResUNetpp",
    "build_block",
    "receptive_field",
    "ConfigError",
    "NestedUNet",
    "build_model",
    "default_model_config",
    "parameter_count",
    "validate_config",
    "FORMAT_VERSION",
    "CheckpointError",
    "load_checkpoint",
    "read_archive",
    "save_checkpoint",
]
