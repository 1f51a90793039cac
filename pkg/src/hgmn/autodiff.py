"""Reverse-mode gradients over a recorded forward pass.

A :class:`Tape` pins an ordered set of named parameters and marks the forward
pass executed inside its ``with`` block. :func:`backward` walks the recorded
graph once, in reverse topological order, and returns one gradient per
parameter (zeros for parameters the forward pass never touched).
"""

from __future__ import annotations

from typing import Dict, Iterable, List, Tuple

import torch
from torch import nn

from .errors import TapeError


class Tape:
    def __init__(self, parameters: Iterable[Tuple[str, torch.Tensor]]):
        named = list(parameters)
        self.names: List[str] = [name for name, _ in named]
        self.tensors: List[torch.Tensor] = [tensor for _, tensor in named]
        self._recorded = False
        self._grad_mode = None

    @classmethod
    def for_module(cls, module: nn.Module) -> "Tape":
        return cls(module.named_parameters())

    @property
    def recorded(self) -> bool:
        return self._recorded

    def __enter__(self) -> "Tape":
        self._recorded = False
        self._grad_mode = torch.enable_grad()
        self._grad_mode.__enter__()
        return self

    def __exit__(self, exc_type, exc, tb) -> bool:
        self._grad_mode.__exit__(exc_type, exc, tb)
        self._recorded = exc_type is None
        return False


def backward(tape: Tape, loss: torch.Tensor) -> Dict[str, torch.Tensor]:
    """Gradients of the scalar ``loss`` for every parameter on ``tape``.

    The recorded graph is released afterwards; a second call needs a new
    forward pass.
    """
    if not tape.recorded:
        raise TapeError("backward called without a recorded forward pass")
    if loss.dim() != 0:
        raise TapeError(f"backward needs a scalar loss, got shape {tuple(loss.shape)}")
    tape._recorded = False
    if not loss.requires_grad:
        return {name: torch.zeros_like(t) for name, t in zip(tape.names, tape.tensors)}
    grads = torch.autograd.grad(loss, tape.tensors, allow_unused=True)
    return {
        name: torch.zeros_like(tensor) if grad is None else grad
        for name, tensor, grad in zip(tape.names, tape.tensors, grads)
    }
