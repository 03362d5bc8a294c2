from .tensor import (AutodiffError, ShapeError, Tensor, concatenate, log_softmax,
                     logsumexp, softmax, stack, tensor)
from . import ops, nn
from .optim import Adam, DivergenceError, TrainConfig, cosine_lr
from .gradcheck import GradCheckReport, grad_check
from .checkpoint import CheckpointError, load_checkpoint, restore, save_checkpoint

__all__ = [
    "Tensor", "tensor", "concatenate", "stack", "softmax", "log_softmax", "logsumexp",
    "ShapeError", "AutodiffError", "ops", "nn", "Adam", "TrainConfig", "cosine_lr",
    "DivergenceError", "grad_check", "GradCheckReport", "save_checkpoint",
    "load_checkpoint", "restore", "CheckpointError",
]
