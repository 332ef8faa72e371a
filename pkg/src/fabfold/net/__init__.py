from .model import (FcnArchitecture, init_params, n_params, forward, backward,
                    sigmoid, ShapeError, StaleCacheError)
from .loss import bce_loss
from .optim import AdamConfig, AdamState, adam_step
from .gradcheck import grad_check, run_grad_check_suite
from .checkpoint import save_checkpoint, load_checkpoint, CheckpointError

__all__ = [
    "FcnArchitecture", "init_params", "n_params", "forward", "backward",
    "sigmoid", "ShapeError", "StaleCacheError", "bce_loss",
    "AdamConfig", "AdamState", "adam_step",
    "grad_check", "run_grad_check_suite",
    "save_checkpoint", "load_checkpoint", "CheckpointError",
]
