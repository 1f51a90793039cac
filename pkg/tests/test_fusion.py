import numpy as np
import pytest
import torch

from hgmn.embeddings import EmbeddingKind, EmbeddingSet
from hgmn.errors import DimensionError
from hgmn.fusion import FusionBlock, TokenOrder, fuse


@pytest.fixture
def block():
    torch.manual_seed(0)
    return FusionBlock(4, 3, hidden_dim=5, state_dim=2).double()


@pytest.fixture
def inputs():
    generator = torch.Generator().manual_seed(1)
    role = torch.randn(7, 4, generator=generator, dtype=torch.float64)
    adjacency = torch.randn(7, 3, generator=generator, dtype=torch.float64)
    return role, adjacency


def test_gates_are_a_distribution(block, inputs):
    out = block(*inputs)

    assert out.gates.shape == (7, 2)
    assert torch.allclose(out.gates.sum(dim=1), torch.ones(7, dtype=torch.float64))
    assert (out.gates >= 0).all()


def test_fused_rows_lie_between_the_projections(block, inputs):
    out = block(*inputs)

    low = torch.minimum(out.role, out.adjacency) - 1e-12
    high = torch.maximum(out.role, out.adjacency) + 1e-12
    assert ((out.fused >= low) & (out.fused <= high)).all()


def test_fixed_gates_bypass_the_ssm(block, inputs):
    role, adjacency = inputs

    role_only = block(role, adjacency, fixed_gates=(1.0, 0.0))
    halves = block(role, adjacency, fixed_gates=(0.5, 0.5))

    assert torch.equal(role_only.fused, block.proj_role(role))
    assert role_only.adjacency is None
    expected = 0.5 * block.proj_role(role) + 0.5 * block.proj_adj(adjacency)
    assert torch.allclose(halves.fused, expected)
    assert halves.gates[:, 0].tolist() == [0.5] * 7


def test_equal_projections_fuse_to_themselves():
    torch.manual_seed(0)
    block = FusionBlock(3, 3, hidden_dim=4, state_dim=2).double()
    block.proj_adj.load_state_dict(block.proj_role.state_dict())
    x = torch.randn(5, 3, dtype=torch.float64)

    out = block(x, x)

    assert torch.allclose(out.fused, block.proj_role(x))


def test_shifting_gate_logits_leaves_fusion_unchanged(block, inputs):
    before = block(*inputs).fused
    with torch.no_grad():
        block.gate_head.bias += 3.0

    assert torch.allclose(block(*inputs).fused, before)


def test_adjacency_first_order_runs(inputs):
    torch.manual_seed(0)
    block = FusionBlock(4, 3, hidden_dim=5, state_dim=2, token_order=TokenOrder.ADJACENCY_FIRST).double()

    out = block(*inputs)

    assert out.fused.shape == (7, 5)


def test_row_mismatch_is_rejected(block):
    with pytest.raises(DimensionError, match="role has 3 rows"):
        block(torch.zeros(3, 4, dtype=torch.float64), torch.zeros(2, 3, dtype=torch.float64))


def test_fuse_embedding_sets(block):
    role = EmbeddingSet(np.ones((2, 4)), EmbeddingKind.ROLE)
    adjacency = EmbeddingSet(np.zeros((2, 3)), EmbeddingKind.ADJACENCY)

    fused = fuse(block, role, adjacency)

    assert fused.shape == (2, 5)
    assert fused.dtype == torch.float64


def test_fuse_matches_step_by_step_computation():
    W_r, b_r = np.array([[0.5, -0.2], [0.1, 0.3]]), np.array([0.1, 0.0])
    W_a, b_a = np.array([[-0.3, 0.4], [0.2, 0.2]]), np.array([0.0, -0.1])
    A = -np.array([[1.0, 2.0], [1.0, 3.0]])
    B = np.array([[1.0, 0.5], [0.8, 1.2]])
    C = np.array([[0.3, -0.2], [0.5, 0.1]])
    delta = np.array([0.1, 0.2])
    W_g, b_g = np.array([[0.2, -0.1, 0.4, 0.3], [-0.3, 0.2, 0.1, -0.2]]), np.array([0.05, -0.05])
    x_r = np.array([[1.0, 2.0], [-1.0, 0.5]])
    x_a = np.array([[0.5, -0.5], [2.0, 1.0]])

    block = FusionBlock(2, 2, hidden_dim=2, state_dim=2).double()
    with torch.no_grad():
        layers = [(block.proj_role, W_r, b_r), (block.proj_adj, W_a, b_a), (block.gate_head, W_g, b_g)]
        for layer, weight, bias in layers:
            layer.weight.copy_(torch.from_numpy(weight))
            layer.bias.copy_(torch.from_numpy(bias))
        block.ssm.A_log.copy_(torch.from_numpy(np.log(-A)))
        block.ssm.B.copy_(torch.from_numpy(B))
        block.ssm.C.copy_(torch.from_numpy(C))
        block.ssm.delta_raw.copy_(torch.from_numpy(np.log(np.expm1(delta))))

    fused = fuse(block, EmbeddingSet(x_r, EmbeddingKind.ROLE), EmbeddingSet(x_a, EmbeddingKind.ADJACENCY))

    expected = np.zeros((2, 2))
    for v in range(2):
        role, adjacency = W_r @ x_r[v] + b_r, W_a @ x_a[v] + b_a
        first, second = np.zeros(2), np.zeros(2)
        for c in range(2):
            for s in range(2):
                A_bar = np.exp(delta[c] * A[c, s])
                B_bar = (A_bar - 1.0) / A[c, s] * B[c, s]
                h = B_bar * role[c]
                first[c] += C[c, s] * h
                h = A_bar * h + B_bar * adjacency[c]
                second[c] += C[c, s] * h
        logits = W_g @ np.concatenate([first, second]) + b_g
        gates = np.exp(logits) / np.exp(logits).sum()
        expected[v] = gates[0] * role + gates[1] * adjacency
    np.testing.assert_allclose(fused.detach().numpy(), expected, rtol=0, atol=1e-12)
