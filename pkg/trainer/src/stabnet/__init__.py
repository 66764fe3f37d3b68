"""Point-wise stability regression: learn the labels a multi-session map
pipeline produces, so single-session clouds can be scored without replaying
the whole comparison stack.

The package talks to the mapping side exclusively through files: it reads
``stablemap-batch`` submap files and writes ``stablemap-predictions`` files
that the mapping tools aggregate back onto full clouds.
"""

from .formats import (
    BATCH_MAGIC,
    FEATURE_LAYOUT,
    PREDICTIONS_MAGIC,
    SubmapSample,
    TrainingBatch,
    read_predictions,
    read_training_batch,
    write_predictions,
)
from .infer import canonical_order, predict_submaps, run_inference
from .model import ModelConfig, PointStabilityNet
from .train import (
    CHECKPOINT_MAGIC,
    EpochStats,
    TrainConfig,
    TrainResult,
    load_checkpoint,
    save_checkpoint,
    train,
)
from .weighting import WeightModel, density_weights, weighted_rmse_loss

__all__ = [
    "BATCH_MAGIC",
    "FEATURE_LAYOUT",
    "PREDICTIONS_MAGIC",
    "CHECKPOINT_MAGIC",
    "SubmapSample",
    "TrainingBatch",
    "read_training_batch",
    "read_predictions",
    "write_predictions",
    "ModelConfig",
    "PointStabilityNet",
    "TrainConfig",
    "TrainResult",
    "EpochStats",
    "train",
    "save_checkpoint",
    "load_checkpoint",
    "canonical_order",
    "predict_submaps",
    "run_inference",
    "WeightModel",
    "density_weights",
    "weighted_rmse_loss",
    "__version__",
]

__version__ = "0.1.0"
