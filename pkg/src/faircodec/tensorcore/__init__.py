"""Minimal deterministic tensor engine: tape autodiff, layer stacks, optimizers."""
from . import autodiff as ops
from .autodiff import Tape, TapeError, Tensor
from .checkpoint import CheckpointError, dumps_checkpoint, load_checkpoint, loads_checkpoint, save_checkpoint
from .network import Network, NetworkShapeError, bind_params, evaluate_network
from .optim import OptimizerState, optimizer_step
from .rng import RngStream


def backward(tape, loss):
    """Gradient map of ``loss`` with respect to every registered parameter."""
    return tape.backward(loss)


__all__ = [
    "CheckpointError", "Network", "NetworkShapeError", "OptimizerState", "RngStream", "Tape",
    "TapeError", "Tensor", "backward", "bind_params", "dumps_checkpoint", "evaluate_network",
    "load_checkpoint", "loads_checkpoint", "ops", "optimizer_step", "save_checkpoint",
]
