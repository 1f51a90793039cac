"""Adam with bias correction and L2-coupled weight decay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, Tuple

import torch
from torch.optim import Optimizer

from .errors import NonFiniteError


def _adam_update(
    name: str,
    param: torch.Tensor,
    grad: torch.Tensor,
    exp_avg: torch.Tensor,
    exp_avg_sq: torch.Tensor,
    step: int,
    lr: float,
    betas: Tuple[float, float],
    eps: float,
    weight_decay: float,
) -> None:
    if not torch.isfinite(grad).all():
        raise NonFiniteError(f"gradient of {name} has non-finite entries")
    beta1, beta2 = betas
    if weight_decay:
        # Coupled decay: folded into the gradient before the moments.
        grad = grad.add(param, alpha=weight_decay)
    exp_avg.mul_(beta1).add_(grad, alpha=1 - beta1)
    exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1 - beta2)
    bias_correction1 = 1 - beta1**step
    bias_correction2 = 1 - beta2**step
    denom = (exp_avg_sq.sqrt() / math.sqrt(bias_correction2)).add_(eps)
    param.addcdiv_(exp_avg, denom, value=-lr / bias_correction1)


@dataclass
class AdamState:
    step: int = 0
    exp_avg: Dict[str, torch.Tensor] = field(default_factory=dict)
    exp_avg_sq: Dict[str, torch.Tensor] = field(default_factory=dict)


def adam_step(
    params: Dict[str, torch.Tensor],
    grads: Dict[str, torch.Tensor],
    state: AdamState,
    lr: float = 0.003,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 5e-4,
) -> Tuple[Dict[str, torch.Tensor], AdamState]:
    """Functional Adam step; inputs are left untouched."""
    step = state.step + 1
    new_params, exp_avg, exp_avg_sq = {}, {}, {}
    with torch.no_grad():
        for name, param in params.items():
            m = state.exp_avg.get(name, torch.zeros_like(param)).clone()
            v = state.exp_avg_sq.get(name, torch.zeros_like(param)).clone()
            updated = param.detach().clone()
            _adam_update(name, updated, grads[name], m, v, step, lr, betas, eps, weight_decay)
            new_params[name], exp_avg[name], exp_avg_sq[name] = updated, m, v
    return new_params, AdamState(step=step, exp_avg=exp_avg, exp_avg_sq=exp_avg_sq)


class Adam(Optimizer):
    """In-place Adam over named parameters, so errors can name the tensor."""

    def __init__(
        self,
        named_params: Iterable[Tuple[str, torch.Tensor]],
        lr: float = 0.003,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 5e-4,
    ):
        if lr <= 0:
            raise ValueError(f"learning rate must be positive, got {lr}")
        named = list(named_params)
        self.param_names = {param: name for name, param in named}
        defaults = dict(lr=lr, betas=betas, eps=eps, weight_decay=weight_decay)
        super().__init__([param for _, param in named], defaults)

    @torch.no_grad()
    def step(self, closure=None):
        loss = None
        if closure is not None:
            with torch.enable_grad():
                loss = closure()
        for group in self.param_groups:
            for param in group["params"]:
                if param.grad is None:
                    continue
                state = self.state[param]
                if len(state) == 0:
                    state["step"] = 0
                    state["exp_avg"] = torch.zeros_like(param)
                    state["exp_avg_sq"] = torch.zeros_like(param)
                state["step"] += 1
                _adam_update(
                    self.param_names.get(param, "<unnamed>"),
                    param,
                    param.grad,
                    state["exp_avg"],
                    state["exp_avg_sq"],
                    state["step"],
                    group["lr"],
                    group["betas"],
                    group["eps"],
                    group["weight_decay"],
                )
        return loss
