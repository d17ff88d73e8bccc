"""Minimal reverse-mode differentiation engine and the Adadelta optimizer."""

from app.diffcore.checkpoint import FORMAT_VERSION, load_params, save_params
from app.diffcore.gradcheck import gradient_check, max_relative_error
from app.diffcore.optim import AdadeltaState, adadelta_step
from app.diffcore.tape import Tape, backward, no_recording
from app.diffcore.tensor import ModelParams, Parameter, Tensor

__all__ = [
    "AdadeltaState",
    "FORMAT_VERSION",
    "ModelParams",
    "Parameter",
    "Tape",
    "Tensor",
    "adadelta_step",
    "backward",
    "gradient_check",
    "load_params",
    "max_relative_error",
    "no_recording",
    "save_params",
]
