"""Gated fusion of role and adjacency embeddings driven by the SSM block.

For every node the projected pair ``[X̂_r[v], X̂_a[v]]`` is scanned as a
length-2 token sequence; a linear head turns the two outputs into gate logits
and a softmax gives ``(ŷ_r, ŷ_a)``, so ``X_f[v]`` is a convex combination of
the two projections.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import torch
from torch import nn

from .embeddings import EmbeddingSet
from .errors import DimensionError
from .ssm import SsmBlock


class FeatureSource(str, Enum):
    BOTH = "both"
    ROLE = "role"
    ADJACENCY = "adjacency"


class TokenOrder(str, Enum):
    ROLE_FIRST = "role_first"
    ADJACENCY_FIRST = "adjacency_first"


@dataclass
class FusionOutput:
    fused: torch.Tensor
    role: Optional[torch.Tensor]
    adjacency: Optional[torch.Tensor]
    # Column 0 is ŷ_r, column 1 is ŷ_a.
    gates: torch.Tensor


class FusionBlock(nn.Module):
    def __init__(
        self,
        role_dim: int,
        adjacency_dim: int,
        hidden_dim: int = 64,
        state_dim: int = 16,
        token_order: TokenOrder = TokenOrder.ROLE_FIRST,
    ):
        super().__init__()
        self.hidden_dim = hidden_dim
        self.token_order = TokenOrder(token_order)
        self.proj_role = nn.Linear(role_dim, hidden_dim)
        self.proj_adj = nn.Linear(adjacency_dim, hidden_dim)
        self.ssm = SsmBlock(hidden_dim, state_dim)
        self.gate_head = nn.Linear(2 * hidden_dim, 2)

    def gate_logits(self, role: torch.Tensor, adjacency: torch.Tensor) -> torch.Tensor:
        if role.shape != adjacency.shape:
            raise DimensionError(
                f"projected widths differ: role {tuple(role.shape)}, adjacency {tuple(adjacency.shape)}"
            )
        tokens = torch.stack([role, adjacency], dim=1)
        if self.token_order is TokenOrder.ADJACENCY_FIRST:
            tokens = tokens.flip(1)
        outputs = self.ssm(tokens)
        if self.token_order is TokenOrder.ADJACENCY_FIRST:
            outputs = outputs.flip(1)
        return self.gate_head(outputs.reshape(outputs.shape[0], -1))

    def forward(
        self,
        role_features: torch.Tensor,
        adjacency_features: torch.Tensor,
        fixed_gates: Optional[Tuple[float, float]] = None,
    ) -> FusionOutput:
        """Fuse the two streams; ``fixed_gates`` bypasses the SSM and gate head."""
        if role_features.shape[0] != adjacency_features.shape[0]:
            raise DimensionError(
                f"role has {role_features.shape[0]} rows, adjacency has {adjacency_features.shape[0]}"
            )
        num_nodes = role_features.shape[0]
        if fixed_gates is not None:
            role_weight, adjacency_weight = fixed_gates
            role = self.proj_role(role_features) if role_weight else None
            adjacency = self.proj_adj(adjacency_features) if adjacency_weight else None
            parts = [w * x for w, x in ((role_weight, role), (adjacency_weight, adjacency)) if x is not None]
            fused = parts[0] if len(parts) == 1 else parts[0] + parts[1]
            gates = fused.new_tensor([role_weight, adjacency_weight]).expand(num_nodes, 2)
            return FusionOutput(fused=fused, role=role, adjacency=adjacency, gates=gates)

        role = self.proj_role(role_features)
        adjacency = self.proj_adj(adjacency_features)
        gates = torch.softmax(self.gate_logits(role, adjacency), dim=-1)
        fused = gates[:, :1] * role + gates[:, 1:] * adjacency
        return FusionOutput(fused=fused, role=role, adjacency=adjacency, gates=gates)


def fuse(block: FusionBlock, role: EmbeddingSet, adjacency: EmbeddingSet) -> torch.Tensor:
    """``X_f`` for two embedding sets, in the block's parameter dtype."""
    role.check_rows(adjacency.num_nodes)
    dtype = block.proj_role.weight.dtype
    return block(
        torch.tensor(role.matrix, dtype=dtype),
        torch.tensor(adjacency.matrix, dtype=dtype),
    ).fused
