import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from hgmn.graph import Graph
from hgmn.graphwave import WaveletConfig
from hgmn.node2vec import WalkConfig
from hgmn.trainer import TrainConfig

# The autouse env fixture is function scoped; examples never touch it.
settings.register_profile("hgmn", deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("hgmn")


@pytest.fixture(autouse=True)
def stub_env(monkeypatch, tmp_path):
    """Keep runs local and single-threaded regardless of the caller's environment."""
    monkeypatch.setenv("HGMN_DATA_DIR", str(tmp_path / "data"))
    monkeypatch.setenv("HGMN_OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.setenv("HGMN_TORCH_THREADS", "1")
    monkeypatch.setenv("HGMN_LOG_LEVEL", "WARNING")
    yield


@pytest.fixture
def p3():
    return Graph.from_edges(3, [(0, 1), (1, 2)])


@pytest.fixture
def k3():
    return Graph.from_edges(3, [(0, 1), (1, 2), (0, 2)])


@pytest.fixture
def star():
    """Centre 0 with four leaves."""
    return Graph.from_edges(5, [(0, i) for i in range(1, 5)])


@pytest.fixture
def c4():
    return Graph.from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])


@pytest.fixture
def two_triangles():
    """Triangles {0,1,2} and {3,4,5} joined by the bridge 2-3; one class per triangle."""
    edges = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5), (2, 3)]
    return Graph.from_edges(6, edges, labels=[0, 0, 0, 1, 1, 1], num_classes=2)


@pytest.fixture
def random_graph():
    def make(num_nodes: int, p: float, seed: int) -> Graph:
        rng = np.random.default_rng(seed)
        upper = np.triu(rng.random((num_nodes, num_nodes)) < p, k=1)
        return Graph.from_edges(num_nodes, np.argwhere(upper))

    return make


@pytest.fixture
def fast_config():
    """Small embeddings, every labeled node in training, float64."""
    return TrainConfig(
        wavelet=WaveletConfig(num_sample_points=5),
        walk=WalkConfig(dim=8, walk_len=10, walks_per_node=4, window=3, epochs=20, learning_rate=0.05, seed=0),
        hidden_dim=8,
        state_dim=4,
        lr=0.01,
        max_epochs=200,
        patience=200,
        dtype="float64",
        train_fraction=1.0,
        val_fraction=0.0,
        imbalance_cap=None,
    )
