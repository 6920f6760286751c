"""Deterministic float64 tensor engine: tape autodiff, models, optimizers, training."""

from .autodiff import (
    Gradients,
    Tape,
    Tensor,
    backward,
    finite_difference_gradient,
)
from .models import (
    BUG_KINDS,
    BrokenModel,
    LinearRegressor,
    LogisticClassifier,
    MlpClassifier,
    MlpRegressor,
    ModelInstance,
    cross_entropy_loss,
    forward,
    forward_with_loss,
    loss_for,
    mse_loss,
)
from .optim import OptimizerState, PlateauScheduler, clip_gradients, step
from .training import (
    SplitArrays,
    TrainBudget,
    TrainRunResult,
    bytes_for_batch,
    evaluate_loss,
    fit,
    load_checkpoint,
    save_checkpoint,
    write_history_csv,
)

__all__ = [
    "Gradients", "Tape", "Tensor", "backward", "finite_difference_gradient",
    "BUG_KINDS", "BrokenModel", "LinearRegressor", "LogisticClassifier",
    "MlpClassifier", "MlpRegressor", "ModelInstance", "cross_entropy_loss",
    "forward", "forward_with_loss", "loss_for", "mse_loss",
    "OptimizerState", "PlateauScheduler", "clip_gradients", "step",
    "SplitArrays", "TrainBudget", "TrainRunResult", "bytes_for_batch",
    "evaluate_loss", "fit", "load_checkpoint", "save_checkpoint",
    "write_history_csv",
]
