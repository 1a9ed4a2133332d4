"""Small differentiable core: tape tensors, GRU cell, Adam, checkpoints."""

from .checkpoint import load_tensors, save_tensors
from .gru import GruWeights, gru_cell, gru_sequence
from .module import Linear, Module
from .optim import Adam, AdamState, adam_step
from .tensor import *  # noqa: F401,F403
from .tensor import __all__ as _tensor_all

__all__ = list(_tensor_all) + [
    "Module",
    "Linear",
    "GruWeights",
    "gru_cell",
    "gru_sequence",
    "Adam",
    "AdamState",
    "adam_step",
    "save_tensors",
    "load_tensors",
]
