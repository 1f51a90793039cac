"""Immutable undirected graphs in CSR form, loaders, and train/val/test splits."""

from __future__ import annotations

import logging
import pickle
import re
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
import scipy.sparse as sp

from .errors import DatasetError, GraphFormatError, NodeIndexError, SplitError
from .settings import WRITE_REMAP

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

PLANETOID_DATASETS = ("cora", "citeseer", "pubmed")
UNLABELED = -1
# First line written by save_edge_list; keeps isolated trailing nodes.
NODES_HEADER = re.compile(r"#\s*nodes\s+(\d+)\s*$")


def _empty_ids() -> np.ndarray:
    return np.empty(0, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph stored as CSR row offsets and sorted neighbor lists.

    ``labels`` uses ``-1`` for nodes without a class; every other entry lies in
    ``[0, num_classes)``.
    """

    num_nodes: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    labels: Optional[np.ndarray] = None
    num_classes: int = 0
    node_tokens: Optional[Tuple[str, ...]] = None
    self_loops: bool = False

    def __post_init__(self):
        if self.num_nodes < 1:
            raise GraphFormatError("a graph needs at least one node")
        offsets = self.row_offsets
        if offsets.shape != (self.num_nodes + 1,) or offsets[0] != 0:
            raise GraphFormatError("row_offsets must have N+1 entries starting at 0")
        if np.any(np.diff(offsets) < 0) or offsets[-1] != self.col_indices.shape[0]:
            raise GraphFormatError("row_offsets must be non-decreasing and end at nnz")
        adj = self.adjacency
        if not adj.has_sorted_indices or _has_duplicate_columns(offsets, self.col_indices):
            raise GraphFormatError("neighbor lists must be strictly increasing")
        if (adj != adj.T).nnz:
            raise GraphFormatError("adjacency is not symmetric")
        if not self.self_loops and adj.diagonal().any():
            raise GraphFormatError("self-loops present but not flagged at load")
        if self.labels is not None:
            if self.labels.shape != (self.num_nodes,):
                raise GraphFormatError("labels must have one entry per node")
            bad = (self.labels < UNLABELED) | (self.labels >= self.num_classes)
            if bad.any():
                node = int(np.flatnonzero(bad)[0])
                raise GraphFormatError(
                    f"label {int(self.labels[node])} of node {node} outside [0, {self.num_classes})"
                )
            self.labels.setflags(write=False)
        self.row_offsets.setflags(write=False)
        self.col_indices.setflags(write=False)

    @classmethod
    def from_edges(
        cls,
        num_nodes: int,
        edges: Sequence[Tuple[int, int]] | np.ndarray,
        *,
        labels: Optional[Sequence[int]] = None,
        num_classes: Optional[int] = None,
        node_tokens: Optional[Sequence[str]] = None,
        keep_self_loops: bool = False,
    ) -> "Graph":
        """Symmetrize and deduplicate ``edges`` into a CSR graph."""
        pairs = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs.min() < 0 or pairs.max() >= num_nodes):
            bad = pairs[(pairs < 0).any(axis=1) | (pairs >= num_nodes).any(axis=1)][0]
            raise NodeIndexError(f"edge {tuple(bad.tolist())} references a node outside [0, {num_nodes})")
        if not keep_self_loops:
            pairs = pairs[pairs[:, 0] != pairs[:, 1]]
        rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
        cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
        adj = sp.csr_matrix(
            (np.ones(rows.shape[0], dtype=np.int32), (rows, cols)), shape=(num_nodes, num_nodes)
        )
        adj.sum_duplicates()
        adj.sort_indices()
        label_array = None
        if labels is not None:
            label_array = np.asarray(labels, dtype=np.int64)
            if num_classes is None:
                num_classes = int(label_array.max()) + 1 if label_array.size else 0
        return cls(
            num_nodes=num_nodes,
            row_offsets=adj.indptr.astype(np.int64),
            col_indices=adj.indices.astype(np.int64),
            labels=label_array,
            num_classes=num_classes or 0,
            node_tokens=tuple(node_tokens) if node_tokens is not None else None,
            self_loops=keep_self_loops and bool(adj.diagonal().any()),
        )

    @classmethod
    def from_networkx(cls, graph: nx.Graph, label_attr: str = "label") -> "Graph":
        """Build from a networkx graph; node order follows ``graph.nodes``."""
        nodes = list(graph.nodes)
        index = {node: i for i, node in enumerate(nodes)}
        edges = [(index[u], index[v]) for u, v in graph.edges]
        raw_labels = [graph.nodes[node].get(label_attr) for node in nodes]
        labels = None
        if any(label is not None for label in raw_labels):
            labels = [UNLABELED if label is None else int(label) for label in raw_labels]
        return cls.from_edges(len(nodes), edges, labels=labels)

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        data = np.ones(self.col_indices.shape[0], dtype=np.float64)
        return sp.csr_matrix(
            (data, self.col_indices, self.row_offsets), shape=(self.num_nodes, self.num_nodes)
        )

    @property
    def degrees(self) -> np.ndarray:
        return np.diff(self.row_offsets)

    @property
    def num_edges(self) -> int:
        loops = int(self.adjacency.diagonal().sum()) if self.self_loops else 0
        return (self.col_indices.shape[0] - loops) // 2 + loops

    @property
    def has_labels(self) -> bool:
        return self.labels is not None

    def neighbors(self, v: int) -> np.ndarray:
        _check_node(self, v)
        return self.col_indices[self.row_offsets[v] : self.row_offsets[v + 1]]

    def edges(self) -> np.ndarray:
        """Each undirected edge once, as ``(u, v)`` with ``u <= v``."""
        coo = sp.triu(self.adjacency).tocoo()
        order = np.lexsort((coo.col, coo.row))
        return np.stack([coo.row[order], coo.col[order]], axis=1).astype(np.int64)

    def with_labels(self, labels: Sequence[int], num_classes: int) -> "Graph":
        return replace(self, labels=np.asarray(labels, dtype=np.int64), num_classes=num_classes)

    def to_networkx(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_nodes))
        graph.add_edges_from(map(tuple, self.edges().tolist()))
        if self.labels is not None:
            nx.set_node_attributes(graph, dict(enumerate(self.labels.tolist())), "label")
        return graph


def _has_duplicate_columns(offsets: np.ndarray, cols: np.ndarray) -> bool:
    if cols.shape[0] < 2:
        return False
    same = np.diff(cols) <= 0
    # A non-increasing step is fine only where a new row begins.
    row_starts = np.zeros(cols.shape[0] - 1, dtype=bool)
    starts = offsets[1:-1]
    starts = starts[(starts > 0) & (starts < cols.shape[0])]
    row_starts[starts - 1] = True
    return bool(np.any(same & ~row_starts))


def _check_node(g: Graph, v: int) -> None:
    if not 0 <= v < g.num_nodes:
        raise NodeIndexError(f"node {v} outside [0, {g.num_nodes})")


def degree(g: Graph, v: int) -> int:
    """Number of neighbors of ``v``."""
    _check_node(g, v)
    return int(g.row_offsets[v + 1] - g.row_offsets[v])


def _read_pairs(path: Path, what: str) -> List[Tuple[int, str, str]]:
    if not path.exists():
        raise DatasetError(f"{what} not found: {path}")
    pairs = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise GraphFormatError(f"{path}:{lineno}: expected two columns, got {raw.strip()!r}")
            pairs.append((lineno, parts[0], parts[1]))
    return pairs


def _declared_nodes(path: Path) -> Optional[int]:
    with path.open("r", encoding="utf-8") as fh:
        match = NODES_HEADER.match(fh.readline().strip())
    return int(match.group(1)) if match else None


def _all_int(tokens) -> bool:
    return all(token.isdigit() for token in tokens)


def remap_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".remap.tsv")


def load_edge_list(
    path: PathLike, directed_hint: bool = False, *, write_remap: bool = WRITE_REMAP
) -> Graph:
    """Read a ``u v`` edge list into a symmetrized, deduplicated, loop-free graph.

    Integer tokens are used as node ids directly. Any other token set is
    remapped in first-appearance order and the table is written to
    ``<path>.remap.tsv``. A leading ``# nodes N`` line sets the node count
    for integer ids, so nodes without edges survive.
    """
    path = Path(path)
    pairs = _read_pairs(path, "edge list")
    declared = _declared_nodes(path)
    if not pairs and not declared:
        raise GraphFormatError(f"{path}: no edges found")

    tokens = [tok for _, u, v in pairs for tok in (u, v)]
    node_tokens: Optional[List[str]] = None
    if _all_int(tokens):
        ids = np.asarray([int(tok) for tok in tokens], dtype=np.int64)
        num_nodes = int(ids.max()) + 1 if ids.size else 0
        if declared is not None:
            if declared < num_nodes:
                raise GraphFormatError(f"{path}:1: header declares {declared} nodes but node {num_nodes - 1} appears")
            num_nodes = declared
    else:
        mapping: Dict[str, int] = {}
        for tok in tokens:
            mapping.setdefault(tok, len(mapping))
        ids = np.asarray([mapping[tok] for tok in tokens], dtype=np.int64)
        num_nodes = len(mapping)
        node_tokens = list(mapping)
        if declared is not None and declared > num_nodes:
            logger.warning(
                "nodes without edges have no token and are dropped",
                extra={"path": str(path), "declared": declared, "nodes": num_nodes},
            )
        if write_remap:
            target = remap_path(path)
            with target.open("w", encoding="utf-8") as fh:
                for token, node in mapping.items():
                    fh.write(f"{token}\t{node}\n")
            logger.info("wrote node remap table", extra={"path": str(target), "nodes": num_nodes})

    edges = ids.reshape(-1, 2)
    loops = int(np.count_nonzero(edges[:, 0] == edges[:, 1]))
    if loops:
        logger.warning("stripped self-loops", extra={"path": str(path), "count": loops})
    if directed_hint:
        forward = {(int(u), int(v)) for u, v in edges}
        one_way = sum(1 for u, v in forward if (v, u) not in forward and u != v)
        logger.info("symmetrized directed edges", extra={"path": str(path), "one_way": one_way})

    graph = Graph.from_edges(num_nodes, edges, node_tokens=node_tokens)
    logger.info(
        "loaded edge list",
        extra={"path": str(path), "nodes": graph.num_nodes, "edges": graph.num_edges},
    )
    return graph


def save_edge_list(g: Graph, path: PathLike) -> None:
    """Write each undirected edge once, using the original tokens when present.

    Integer-id graphs start with a ``# nodes N`` line. Token graphs cannot name
    a node without edges, so such nodes are lost on reload.
    """
    names = g.node_tokens if g.node_tokens is not None else [str(i) for i in range(g.num_nodes)]
    with Path(path).open("w", encoding="utf-8") as fh:
        if g.node_tokens is None:
            fh.write(f"# nodes {g.num_nodes}\n")
        for u, v in g.edges().tolist():
            fh.write(f"{names[u]} {names[v]}\n")


def load_labels(path: PathLike, g: Graph) -> Graph:
    """Attach ``node label`` rows to ``g``; nodes without a row stay unlabeled."""
    path = Path(path)
    rows = _read_pairs(path, "label file")
    if g.node_tokens is not None:
        lookup = {token: i for i, token in enumerate(g.node_tokens)}
    else:
        lookup = None

    label_tokens = [label for _, _, label in rows]
    if _all_int(label_tokens):
        class_of = {tok: int(tok) for tok in label_tokens}
    else:
        class_of = {}
        for tok in label_tokens:
            class_of.setdefault(tok, len(class_of))
    num_classes = max(class_of.values()) + 1 if class_of else 0

    labels = np.full(g.num_nodes, UNLABELED, dtype=np.int64)
    for lineno, node_tok, label_tok in rows:
        if lookup is not None:
            node = lookup.get(node_tok)
        else:
            node = int(node_tok) if node_tok.isdigit() else None
        if node is None or not 0 <= node < g.num_nodes:
            raise GraphFormatError(f"{path}:{lineno}: unknown node {node_tok!r}")
        labels[node] = class_of[label_tok]
    return g.with_labels(labels, num_classes)


def load_planetoid(directory: PathLike, name: str) -> Graph:
    """Load the structure and labels of a Planetoid citation dataset.

    Only ``y``, ``ty``, ``ally``, ``graph`` and ``test.index`` are read; node
    content features are never used.
    """
    name = name.lower()
    if name not in PLANETOID_DATASETS:
        raise DatasetError(f"unknown Planetoid dataset {name!r}; expected one of {PLANETOID_DATASETS}")
    directory = Path(directory)

    objects = {}
    for key in ("ty", "ally", "graph"):
        file_path = directory / f"ind.{name}.{key}"
        if not file_path.exists():
            raise DatasetError(f"missing Planetoid file: {file_path}")
        with file_path.open("rb") as fh:
            objects[key] = pickle.load(fh, encoding="latin1")
    index_path = directory / f"ind.{name}.test.index"
    if not index_path.exists():
        raise DatasetError(f"missing Planetoid file: {index_path}")
    test_index = np.loadtxt(index_path, dtype=np.int64, ndmin=1)

    num_nodes = len(objects["graph"])
    citations = nx.from_dict_of_lists(objects["graph"])
    for node, other in citations.edges:
        if not (0 <= node < num_nodes and 0 <= other < num_nodes):
            raise DatasetError(f"{name}: edge ({node}, {other}) index out of range [0, {num_nodes})")
    edges = np.asarray(list(citations.edges), dtype=np.int64).reshape(-1, 2)

    ally = np.asarray(objects["ally"])
    ty = np.asarray(objects["ty"])
    num_classes = ally.shape[1]
    sorted_index = np.sort(test_index)
    # Citeseer leaves gaps in the test range; those nodes get no label row.
    full_range = np.arange(sorted_index[0], sorted_index[-1] + 1)
    ty_full = np.zeros((full_range.shape[0], num_classes), dtype=ally.dtype)
    ty_full[sorted_index - sorted_index[0]] = ty
    onehot = np.vstack([ally, ty_full])
    onehot[test_index] = onehot[sorted_index]
    if onehot.shape[0] != num_nodes:
        raise DatasetError(
            f"{name}: {onehot.shape[0]} label rows for {num_nodes} nodes"
        )
    labels = np.where(onehot.sum(axis=1) > 0, onehot.argmax(axis=1), UNLABELED)

    graph = Graph.from_edges(num_nodes, edges, labels=labels, num_classes=num_classes)
    logger.info(
        "loaded planetoid dataset",
        extra={"dataset": name, "nodes": num_nodes, "edges": graph.num_edges, "classes": num_classes},
    )
    return graph


@dataclass(frozen=True, eq=False)
class SplitSpec:
    """Split request and result.

    ``train_fraction`` of each class forms the labeled pool; ``val_fraction``
    of the pool is held out for early stopping. ``imbalance_cap`` bounds the
    smallest-to-largest class ratio of the training set (``None`` disables it).
    """

    seed: int = 0
    train_fraction: float = 0.7
    val_fraction: float = 0.2
    imbalance_cap: Optional[float] = 0.33
    train_ids: np.ndarray = field(default_factory=_empty_ids)
    val_ids: np.ndarray = field(default_factory=_empty_ids)
    test_ids: np.ndarray = field(default_factory=_empty_ids)

    def __post_init__(self):
        if not 0.0 < self.train_fraction <= 1.0:
            raise SplitError(f"train_fraction must lie in (0, 1], got {self.train_fraction}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise SplitError(f"val_fraction must lie in [0, 1), got {self.val_fraction}")
        if self.imbalance_cap is not None and not 0.0 < self.imbalance_cap <= 1.0:
            raise SplitError(f"imbalance_cap must lie in (0, 1], got {self.imbalance_cap}")
        sets = [np.asarray(ids, dtype=np.int64) for ids in (self.train_ids, self.val_ids, self.test_ids)]
        merged = np.concatenate(sets)
        if np.unique(merged).shape[0] != merged.shape[0]:
            raise SplitError("train, val and test ids must be pairwise disjoint")
        if merged.size and merged.min() < 0:
            raise SplitError("split ids must be non-negative")
        object.__setattr__(self, "train_ids", sets[0])
        object.__setattr__(self, "val_ids", sets[1])
        object.__setattr__(self, "test_ids", sets[2])


def sample_split(g: Graph, cfg: SplitSpec) -> SplitSpec:
    """Stratified random split of the labeled nodes, deterministic in ``cfg.seed``."""
    if g.labels is None:
        raise SplitError("graph has no labels to split")
    rng = np.random.default_rng(cfg.seed)
    labeled = np.flatnonzero(g.labels >= 0)
    per_class = [labeled[g.labels[labeled] == c] for c in range(g.num_classes)]
    missing = [c for c, ids in enumerate(per_class) if ids.shape[0] == 0]
    if missing:
        raise SplitError(f"classes {missing} have no labeled nodes")

    train, val, test = [], [], []
    for ids in per_class:
        ids = rng.permutation(ids)
        n_pool = max(1, int(round(cfg.train_fraction * ids.shape[0])))
        n_val = min(int(round(cfg.val_fraction * n_pool)), n_pool - 1)
        val.append(ids[:n_val])
        train.append(ids[n_val:n_pool])
        test.append(ids[n_pool:])

    if cfg.imbalance_cap is not None:
        smallest = min(ids.shape[0] for ids in train)
        allowed = int(np.floor(smallest / cfg.imbalance_cap + 1e-9))
        for c, ids in enumerate(train):
            if ids.shape[0] > allowed:
                test.append(ids[allowed:])
                train[c] = ids[:allowed]

    def merge(parts):
        return np.sort(np.concatenate(parts)) if parts else _empty_ids()

    split = replace(cfg, train_ids=merge(train), val_ids=merge(val), test_ids=merge(test))
    logger.debug(
        "sampled split",
        extra={
            "seed": cfg.seed,
            "train": split.train_ids.shape[0],
            "val": split.val_ids.shape[0],
            "test": split.test_ids.shape[0],
        },
    )
    return split
