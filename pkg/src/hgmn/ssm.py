"""Diagonal linear state space block: zero-order-hold discretization and recurrent scan.

Each of the ``channels`` inputs drives its own ``state_dim`` states, so the
continuous system per channel is ``h' = A h + B x``, ``y = C h`` with a
diagonal, strictly negative ``A``.
"""

from __future__ import annotations

import math
from typing import Tuple

import torch
import torch.nn.functional as F
from torch import nn

from .errors import DimensionError, NonFiniteError

# Below this |Δ·A| the ZOH input matrix uses its A -> 0 limit Δ·B.
ZOH_LIMIT = 1e-8


def _check_finite(**tensors: torch.Tensor) -> None:
    for name, tensor in tensors.items():
        if not torch.isfinite(tensor).all():
            raise NonFiniteError(f"SSM parameter {name} has non-finite entries")


def discretize(A: torch.Tensor, B: torch.Tensor, delta: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
    """ZOH discretization of a diagonal system.

    ``A`` and ``B`` have shape ``(channels, state_dim)``, ``delta`` has shape
    ``(channels,)``. Returns ``A_bar = exp(ΔA)`` and
    ``B_bar = (ΔA)^-1 (exp(ΔA) - 1) ΔB``.
    """
    _check_finite(A=A, B=B, delta=delta)
    if (delta <= 0).any():
        raise NonFiniteError("SSM step size delta must be positive")
    step = delta.unsqueeze(-1)
    scaled = step * A
    A_bar = torch.exp(scaled)
    small = scaled.abs() < ZOH_LIMIT
    safe = torch.where(small, torch.ones_like(scaled), scaled)
    factor = torch.where(small, torch.ones_like(scaled), torch.expm1(safe) / safe)
    B_bar = factor * step * B
    return A_bar, B_bar


def recurrent_scan(A_bar: torch.Tensor, B_bar: torch.Tensor, C: torch.Tensor, xs: torch.Tensor) -> torch.Tensor:
    """``h_t = A_bar h_{t-1} + B_bar x_t``, ``y_t = C h_t`` from ``h_0 = 0``.

    ``xs`` has shape ``(batch, length, channels)``; so does the result.
    """
    if xs.dim() != 3 or xs.shape[-1] != B_bar.shape[0]:
        raise DimensionError(
            f"scan input of shape {tuple(xs.shape)} does not match {B_bar.shape[0]} SSM channels"
        )
    if xs.shape[1] < 1:
        raise DimensionError("scan needs a sequence of length >= 1")
    h = xs.new_zeros(xs.shape[0], *B_bar.shape)
    outputs = []
    for t in range(xs.shape[1]):
        h = A_bar * h + B_bar * xs[:, t].unsqueeze(-1)
        outputs.append((h * C).sum(-1))
    return torch.stack(outputs, dim=1)


def inverse_softplus(x: torch.Tensor) -> torch.Tensor:
    return x + torch.log(-torch.expm1(-x))


class SsmBlock(nn.Module):
    """Learnable ``A`` (as ``-exp(A_log)``), ``B``, ``C`` and ``Δ`` (as softplus)."""

    def __init__(
        self,
        channels: int,
        state_dim: int = 16,
        delta_min: float = 0.01,
        delta_max: float = 0.1,
    ):
        super().__init__()
        self.channels = channels
        self.state_dim = state_dim
        ladder = torch.arange(1, state_dim + 1, dtype=torch.get_default_dtype())
        self.A_log = nn.Parameter(torch.log(ladder).repeat(channels, 1))
        self.B = nn.Parameter(torch.ones(channels, state_dim))
        self.C = nn.Parameter(torch.randn(channels, state_dim) / math.sqrt(state_dim))
        log_delta = torch.rand(channels) * (math.log(delta_max) - math.log(delta_min)) + math.log(delta_min)
        self.delta_raw = nn.Parameter(inverse_softplus(torch.exp(log_delta)))

    @property
    def A(self) -> torch.Tensor:
        return -torch.exp(self.A_log)

    @property
    def delta(self) -> torch.Tensor:
        return F.softplus(self.delta_raw)

    def discretize(self) -> Tuple[torch.Tensor, torch.Tensor]:
        return discretize(self.A, self.B, self.delta)

    def forward(self, xs: torch.Tensor) -> torch.Tensor:
        A_bar, B_bar = self.discretize()
        return recurrent_scan(A_bar, B_bar, self.C, xs)
