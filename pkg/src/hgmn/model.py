"""The differentiable HGMN stack: fusion, hypergraph convolutions, residual, classifier, loss."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterable, List, Optional, Tuple

import torch
from torch import nn

from .errors import DimensionError
from .fusion import FeatureSource, FusionBlock, FusionOutput, TokenOrder

# ln(Ŷ) is evaluated on max(Ŷ, LOG_CLAMP).
LOG_CLAMP = 1e-12


class Activation(str, Enum):
    RELU = "relu"
    IDENTITY = "identity"


class ResidualSource(str, Enum):
    # X_1 is the fused embedding X_f.
    FUSED = "fused"
    # X_1 is a separate projection of [X_r || X_a].
    PROJECTION = "projection"


def activate(x: torch.Tensor, act: Activation) -> torch.Tensor:
    return torch.relu(x) if Activation(act) is Activation.RELU else x


def conv_layer(P: torch.Tensor, X_prev: torch.Tensor, delta: torch.Tensor, act: Activation = Activation.RELU) -> torch.Tensor:
    """``σ(P · X_prev · δ)`` for a sparse or dense propagation matrix ``P``."""
    if X_prev.shape[1] != delta.shape[0]:
        raise DimensionError(
            f"layer input has {X_prev.shape[1]} columns but the weight has {delta.shape[0]} rows"
        )
    if P.shape[1] != X_prev.shape[0]:
        raise DimensionError(f"operator of shape {tuple(P.shape)} cannot propagate {X_prev.shape[0]} rows")
    mixed = X_prev @ delta
    out = torch.sparse.mm(P, mixed) if P.is_sparse else P @ mixed
    return activate(out, act)


def residual_combine(X1: torch.Tensor, X_last: torch.Tensor, W_res: torch.Tensor) -> torch.Tensor:
    """``J = X_1 W_res + X_last``."""
    if X1.shape != X_last.shape or W_res.shape != (X1.shape[1], X1.shape[1]):
        raise DimensionError(
            f"residual shapes disagree: X_1 {tuple(X1.shape)}, X_last {tuple(X_last.shape)}, "
            f"W_res {tuple(W_res.shape)}"
        )
    return X1 @ W_res + X_last


def classify(J: torch.Tensor, W_m: torch.Tensor, b_m: torch.Tensor) -> torch.Tensor:
    """``Ŷ = softmax(b_m + J W_m)`` row-wise."""
    if J.shape[1] != W_m.shape[0] or W_m.shape[1] != b_m.shape[0]:
        raise DimensionError(
            f"classifier shapes disagree: J {tuple(J.shape)}, W_m {tuple(W_m.shape)}, b_m {tuple(b_m.shape)}"
        )
    return torch.softmax(b_m + J @ W_m, dim=1)


def loss(
    Yhat: torch.Tensor,
    labels: torch.Tensor,
    mask: torch.Tensor,
    params: Iterable[torch.Tensor] = (),
    lam: float = 0.0,
) -> torch.Tensor:
    """Cross-entropy summed over ``mask`` plus ``lam`` times the squared L2 norm of ``params``."""
    if mask.numel() == 0:
        raise DimensionError("loss needs at least one masked node")
    picked = Yhat[mask, labels[mask]]
    total = -torch.log(picked.clamp_min(LOG_CLAMP)).sum()
    if lam:
        total = total + lam * sum((p**2).sum() for p in params)
    return total


@dataclass
class ModelOutput:
    probabilities: torch.Tensor
    embeddings: torch.Tensor
    fusion: FusionOutput


class HgmnModel(nn.Module):
    """All learnable parameters of the pipeline and its forward pass.

    Layer widths run ``hidden_dim -> conv_hidden_dim ... -> hidden_dim`` so the
    last convolution output can be added to ``X_1 W_res``.
    """

    def __init__(
        self,
        role_dim: int,
        adjacency_dim: int,
        num_classes: int,
        *,
        hidden_dim: int = 64,
        state_dim: int = 16,
        num_layers: int = 2,
        conv_hidden_dim: Optional[int] = None,
        activation: Activation = Activation.RELU,
        final_activation: Activation = Activation.IDENTITY,
        token_order: TokenOrder = TokenOrder.ROLE_FIRST,
        feature_source: FeatureSource = FeatureSource.BOTH,
        residual_source: ResidualSource = ResidualSource.FUSED,
        disable_mamba: bool = False,
        disable_residual: bool = False,
        seed: int = 0,
        dtype: torch.dtype = torch.float32,
    ):
        super().__init__()
        if num_layers < 0:
            raise DimensionError("num_layers must be >= 0")
        self.init_kwargs = dict(
            role_dim=role_dim,
            adjacency_dim=adjacency_dim,
            num_classes=num_classes,
            hidden_dim=hidden_dim,
            state_dim=state_dim,
            num_layers=num_layers,
            conv_hidden_dim=conv_hidden_dim,
            activation=Activation(activation).value,
            final_activation=Activation(final_activation).value,
            token_order=TokenOrder(token_order).value,
            feature_source=FeatureSource(feature_source).value,
            residual_source=ResidualSource(residual_source).value,
            disable_mamba=disable_mamba,
            disable_residual=disable_residual,
            seed=seed,
        )
        self.activation = Activation(activation)
        self.final_activation = Activation(final_activation)
        self.feature_source = FeatureSource(feature_source)
        self.residual_source = ResidualSource(residual_source)
        self.disable_mamba = disable_mamba
        self.disable_residual = disable_residual

        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            self.fusion = FusionBlock(role_dim, adjacency_dim, hidden_dim, state_dim, token_order)
            widths = [hidden_dim] + [conv_hidden_dim or hidden_dim] * (num_layers - 1) + [hidden_dim]
            layer_shapes = list(zip(widths[:-1], widths[1:])) if num_layers else []
            self.conv_weights = nn.ParameterList(
                [nn.Parameter(nn.init.xavier_uniform_(torch.empty(*shape))) for shape in layer_shapes]
            )
            self.residual_weight = nn.Parameter(nn.init.xavier_uniform_(torch.empty(hidden_dim, hidden_dim)))
            self.residual_projection = (
                nn.Linear(role_dim + adjacency_dim, hidden_dim)
                if self.residual_source is ResidualSource.PROJECTION
                else None
            )
            self.W_m = nn.Parameter(nn.init.xavier_uniform_(torch.empty(hidden_dim, num_classes)))
            self.b_m = nn.Parameter(torch.zeros(num_classes))
        self.to(dtype)

    @property
    def dtype(self) -> torch.dtype:
        return self.W_m.dtype

    @property
    def fixed_gates(self) -> Optional[Tuple[float, float]]:
        if self.feature_source is FeatureSource.ROLE:
            return (1.0, 0.0)
        if self.feature_source is FeatureSource.ADJACENCY:
            return (0.0, 1.0)
        if self.disable_mamba:
            return (0.5, 0.5)
        return None

    def inactive_prefixes(self) -> List[str]:
        prefixes = []
        if self.fixed_gates is not None:
            prefixes += ["fusion.ssm.", "fusion.gate_head."]
        if self.feature_source is FeatureSource.ROLE:
            prefixes.append("fusion.proj_adj.")
        elif self.feature_source is FeatureSource.ADJACENCY:
            prefixes.append("fusion.proj_role.")
        if self.disable_residual:
            prefixes += ["residual_weight", "residual_projection."]
        return prefixes

    def named_active_parameters(self) -> List[Tuple[str, nn.Parameter]]:
        """Parameters the current variant actually uses."""
        prefixes = self.inactive_prefixes()
        return [(name, p) for name, p in self.named_parameters() if not any(name.startswith(x) for x in prefixes)]

    def forward(self, P: torch.Tensor, role: torch.Tensor, adjacency: torch.Tensor) -> ModelOutput:
        fused = self.fusion(role, adjacency, fixed_gates=self.fixed_gates)
        x = fused.fused
        last = len(self.conv_weights) - 1
        for index, delta in enumerate(self.conv_weights):
            x = conv_layer(P, x, delta, self.final_activation if index == last else self.activation)
        if self.disable_residual:
            J = x
        else:
            if self.residual_projection is not None:
                x1 = self.residual_projection(torch.cat([role, adjacency], dim=1))
            else:
                x1 = fused.fused
            J = residual_combine(x1, x, self.residual_weight)
        return ModelOutput(probabilities=classify(J, self.W_m, self.b_m), embeddings=J, fusion=fused)
