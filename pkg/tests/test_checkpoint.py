import pytest
import torch

from hgmn.checkpoint import load_checkpoint, save_checkpoint
from hgmn.errors import CheckpointError
from hgmn.model import HgmnModel


def test_checkpoint_restores_the_same_model(tmp_path):
    model = HgmnModel(4, 3, 2, hidden_dim=5, state_dim=2, disable_residual=True, seed=7, dtype=torch.float64)
    path = save_checkpoint(model, tmp_path / "run" / "checkpoint.pt", config={"lr": 0.01})

    restored, config = load_checkpoint(path)

    assert config == {"lr": 0.01}
    assert restored.dtype == torch.float64
    assert restored.disable_residual
    role = torch.randn(6, 4, dtype=torch.float64)
    adjacency = torch.randn(6, 3, dtype=torch.float64)
    P = torch.eye(6, dtype=torch.float64).to_sparse()
    assert torch.equal(model(P, role, adjacency).probabilities, restored(P, role, adjacency).probabilities)


def test_missing_checkpoint(tmp_path):
    with pytest.raises(CheckpointError, match="not found"):
        load_checkpoint(tmp_path / "absent.pt")


def test_foreign_file_is_rejected(tmp_path):
    path = tmp_path / "other.pt"
    torch.save({"format": "something-else"}, path)

    with pytest.raises(CheckpointError, match="not an HGMN checkpoint"):
        load_checkpoint(path)
