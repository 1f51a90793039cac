import pytest
import torch

from hgmn.errors import NonFiniteError
from hgmn.optim import Adam, AdamState, adam_step


def _param(values):
    return torch.nn.Parameter(torch.tensor(values, dtype=torch.float64))


def test_zero_gradient_without_decay_leaves_parameters():
    param = _param([1.0, -2.0])
    optimizer = Adam([("w", param)], lr=0.1, weight_decay=0.0)
    param.grad = torch.zeros_like(param)

    optimizer.step()

    assert param.tolist() == [1.0, -2.0]


def test_first_step_moves_by_learning_rate():
    param = _param([1.0, 1.0])
    optimizer = Adam([("w", param)], lr=0.003, weight_decay=0.0)
    param.grad = torch.tensor([0.5, -20.0], dtype=torch.float64)

    optimizer.step()

    assert param[0].item() == pytest.approx(1.0 - 0.003, rel=1e-6)
    assert param[1].item() == pytest.approx(1.0 + 0.003, rel=1e-6)


def test_coupled_weight_decay_pulls_toward_zero():
    param = _param([2.0])
    optimizer = Adam([("w", param)], lr=0.01, weight_decay=5e-4)
    param.grad = torch.zeros_like(param)

    optimizer.step()

    assert param.item() == pytest.approx(2.0 - 0.01, rel=1e-6)


def test_non_finite_gradient_names_the_parameter():
    param = _param([1.0])
    optimizer = Adam([("conv_weights.0", param)])
    param.grad = torch.tensor([float("inf")], dtype=torch.float64)

    with pytest.raises(NonFiniteError, match="conv_weights.0"):
        optimizer.step()


def test_learning_rate_must_be_positive():
    with pytest.raises(ValueError, match="positive"):
        Adam([("w", _param([1.0]))], lr=0.0)


def test_functional_step_matches_optimizer_and_keeps_inputs():
    start = torch.tensor([0.3, -0.7], dtype=torch.float64)
    grads = [torch.tensor([0.1, 0.2], dtype=torch.float64), torch.tensor([-0.3, 0.05], dtype=torch.float64)]
    param = torch.nn.Parameter(start.clone())
    optimizer = Adam([("w", param)], lr=0.01)
    params, state = {"w": start.clone()}, AdamState()

    for grad in grads:
        param.grad = grad.clone()
        optimizer.step()
        before = params["w"].clone()
        params, state = adam_step(params, {"w": grad}, state, lr=0.01)
        assert not torch.equal(before, params["w"])

    assert state.step == 2
    assert torch.allclose(params["w"], param.detach(), atol=1e-15)
    assert start.tolist() == [0.3, -0.7]


def test_repeated_runs_are_identical():
    def run():
        param = _param([0.5, 0.25])
        optimizer = Adam([("w", param)], lr=0.05)
        for _ in range(10):
            param.grad = torch.sin(param.detach() * 3.0)
            optimizer.step()
        return param.detach()

    assert torch.equal(run(), run())
