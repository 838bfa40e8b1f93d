"""Vision transformer image classification toolkit."""

from ._core import (
    CheckpointError,
    ConfigError,
    ContractError,
    DatasetError,
    DimensionError,
    Error,
    InputError,
    Model,
    ParseError,
    TrainingError,
    ViTConfig,
    attention,
    cross_entropy,
    gelu,
    layer_norm,
    matmul,
    patchify,
    read_image,
    resize,
    run_cli,
    softmax,
)

__version__ = "0.1.0"
