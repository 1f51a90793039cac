import math

import pytest
import torch

from hgmn.autodiff import Tape, backward
from hgmn.errors import DimensionError, TapeError
from hgmn.graph import Graph
from hgmn.hypergraph import build_link_hypergraph, propagation_operator
from hgmn.model import Activation, HgmnModel, ResidualSource, classify, conv_layer, loss, residual_combine


def _d(values):
    return torch.tensor(values, dtype=torch.float64)


@pytest.fixture
def five_node_problem():
    g = Graph.from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 2)], labels=[0, 0, 1, 1, 1], num_classes=2)
    P = propagation_operator(build_link_hypergraph(g)).to_torch(torch.float64)
    generator = torch.Generator().manual_seed(3)
    role = torch.randn(5, 4, generator=generator, dtype=torch.float64)
    adjacency = torch.randn(5, 3, generator=generator, dtype=torch.float64)
    labels = torch.tensor([0, 0, 1, 1, 1])
    mask = torch.tensor([0, 1, 2, 3])
    return P, role, adjacency, labels, mask


def _model(**kwargs):
    options = {"hidden_dim": 4, "state_dim": 2, "num_layers": 2, "dtype": torch.float64, **kwargs}
    return HgmnModel(4, 3, 2, **options)


def test_conv_layer_with_identity_operator():
    X = _d([[1.0, -2.0], [-3.0, 4.0]])

    out = conv_layer(torch.eye(2, dtype=torch.float64), X, torch.eye(2, dtype=torch.float64))

    assert out.tolist() == [[1.0, 0.0], [0.0, 4.0]]


def test_conv_layer_identity_activation_keeps_sign():
    X = _d([[1.0, -2.0]])

    out = conv_layer(_d([[2.0]]), X, _d([[1.0], [1.0]]), Activation.IDENTITY)

    assert out.tolist() == [[-2.0]]


def test_conv_layer_shape_errors():
    with pytest.raises(DimensionError, match="3 columns"):
        conv_layer(torch.eye(2), torch.zeros(2, 3), torch.zeros(2, 2))
    with pytest.raises(DimensionError, match="cannot propagate 3 rows"):
        conv_layer(torch.eye(2), torch.zeros(3, 2), torch.zeros(2, 2))


def test_residual_combine():
    out = residual_combine(_d([[1.0, 2.0]]), _d([[10.0, 20.0]]), _d([[1.0, 0.0], [0.0, 2.0]]))

    assert out.tolist() == [[11.0, 24.0]]


def test_classify_rows_are_distributions():
    probabilities = classify(_d([[0.0, 0.0], [1.0, -1.0]]), _d([[1.0, 0.0], [0.0, 1.0]]), _d([0.0, 0.0]))

    assert probabilities[0].tolist() == [0.5, 0.5]
    assert torch.allclose(probabilities.sum(dim=1), torch.ones(2, dtype=torch.float64))


def test_loss_sums_masked_cross_entropy():
    Yhat = _d([[0.5, 0.5], [0.25, 0.75], [0.9, 0.1]])

    value = loss(Yhat, torch.tensor([0, 1, 1]), torch.tensor([0, 1]))

    assert value.item() == pytest.approx(-math.log(0.5) - math.log(0.75))


def test_loss_adds_squared_norm():
    Yhat = _d([[1.0, 0.0]])

    value = loss(Yhat, torch.tensor([0]), torch.tensor([0]), [_d([1.0, 2.0])], lam=0.1)

    assert value.item() == pytest.approx(0.5)


def test_loss_clamps_zero_probability():
    value = loss(_d([[1.0, 0.0]]), torch.tensor([1]), torch.tensor([0]))

    assert value.item() == pytest.approx(-math.log(1e-12))


def test_loss_needs_a_masked_node():
    with pytest.raises(DimensionError):
        loss(_d([[1.0, 0.0]]), torch.tensor([0]), torch.tensor([], dtype=torch.long))


def test_same_seed_same_parameters():
    first, second = _model(seed=5), _model(seed=5)

    for (name, a), (_, b) in zip(first.named_parameters(), second.named_parameters()):
        assert torch.equal(a, b), name


def test_gradients_match_central_differences(five_node_problem):
    P, role, adjacency, labels, mask = five_node_problem
    model = _model(seed=0)
    params = model.named_active_parameters()
    assert [name for name, _ in params] == [name for name, _ in model.named_parameters()]
    tape = Tape(params)

    def objective():
        return loss(model(P, role, adjacency).probabilities, labels, mask, [p for _, p in params], lam=1e-3)

    with tape:
        value = objective()
    grads = backward(tape, value)

    eps = 1e-6
    with torch.no_grad():
        for name, param in params:
            flat = param.view(-1)
            for index in range(flat.numel()):
                original = flat[index].item()
                flat[index] = original + eps
                plus = objective().item()
                flat[index] = original - eps
                minus = objective().item()
                flat[index] = original
                numeric = (plus - minus) / (2 * eps)
                analytic = grads[name].view(-1)[index].item()
                assert abs(analytic - numeric) <= 1e-4 * max(1.0, abs(analytic), abs(numeric)), name


def test_backward_without_forward_fails():
    model = _model()

    with pytest.raises(TapeError, match="without a recorded forward"):
        backward(Tape.for_module(model), torch.zeros((), dtype=torch.float64))


def test_backward_consumes_the_recording(five_node_problem):
    P, role, adjacency, labels, mask = five_node_problem
    model = _model()
    tape = Tape.for_module(model)
    with tape:
        value = loss(model(P, role, adjacency).probabilities, labels, mask)

    backward(tape, value)
    with pytest.raises(TapeError):
        backward(tape, value)


def test_unused_parameters_get_zero_gradients(five_node_problem):
    P, role, adjacency, labels, mask = five_node_problem
    model = _model(disable_mamba=True)
    tape = Tape.for_module(model)
    with tape:
        value = loss(model(P, role, adjacency).probabilities, labels, mask)

    grads = backward(tape, value)

    assert torch.count_nonzero(grads["fusion.ssm.C"]) == 0
    assert torch.count_nonzero(grads["fusion.gate_head.weight"]) == 0
    assert torch.count_nonzero(grads["W_m"]) > 0


def test_gradient_is_linear_in_the_loss(five_node_problem):
    P, role, adjacency, labels, mask = five_node_problem
    model = _model()
    tape = Tape.for_module(model)

    with tape:
        once = loss(model(P, role, adjacency).probabilities, labels, mask)
    single = backward(tape, once)
    with tape:
        twice = 2.0 * loss(model(P, role, adjacency).probabilities, labels, mask)
    double = backward(tape, twice)

    for name, grad in single.items():
        assert torch.allclose(double[name], 2.0 * grad, atol=1e-12), name


def test_ablations_deactivate_components():
    no_residual = dict(_model(disable_residual=True).named_active_parameters())
    no_mamba = dict(_model(disable_mamba=True).named_active_parameters())
    adjacency_only = dict(_model(feature_source="adjacency").named_active_parameters())

    assert "residual_weight" not in no_residual
    assert not any(name.startswith("fusion.ssm.") for name in no_mamba)
    assert "fusion.proj_adj.weight" in no_mamba
    assert not any(name.startswith("fusion.proj_role.") for name in adjacency_only)


def test_forward_shapes_and_variants(five_node_problem):
    P, role, adjacency, _, _ = five_node_problem

    for kwargs in ({}, {"disable_residual": True}, {"residual_source": ResidualSource.PROJECTION}, {"num_layers": 0}):
        out = _model(**kwargs)(P, role, adjacency)
        assert out.probabilities.shape == (5, 2)
        assert out.embeddings.shape == (5, 4)
        assert torch.allclose(out.probabilities.sum(dim=1), torch.ones(5, dtype=torch.float64))
