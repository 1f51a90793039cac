"""Hypergraphs built from ordinary graphs and the convolution propagation operator."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp
import torch

from .errors import HypergraphError
from .graph import Graph

logger = logging.getLogger(__name__)


class HypergraphKind(str, Enum):
    LINK = "link"
    DEGREE = "degree"

    @property
    def letter(self) -> str:
        return "L" if self is HypergraphKind.LINK else "D"


class Normalization(str, Enum):
    # D_v^-1 H W D_e^-1 H^T D_v^-1, inverse node degree on both sides.
    ASYMMETRIC = "asymmetric"
    # D_v^-1/2 H W D_e^-1 H^T D_v^-1/2, the usual HGNN operator.
    SYMMETRIC_HALF = "symmetric"


@dataclass(frozen=True, eq=False)
class Hypergraph:
    """Incidence ``H`` (N x N_E, entries in {0, 1}) with weights and degrees.

    ``edge_degrees[e]`` counts member nodes; ``node_degrees[v]`` sums the
    weights of the hyperedges containing ``v``.
    """

    incidence: sp.csr_matrix
    edge_weights: np.ndarray
    node_degrees: np.ndarray
    edge_degrees: np.ndarray
    kind: HypergraphKind
    # Degree value per hyperedge for DEGREE, centre node per hyperedge for LINK.
    edge_keys: np.ndarray

    @property
    def num_nodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def num_edges(self) -> int:
        return self.incidence.shape[1]

    @classmethod
    def from_incidence(
        cls,
        incidence: sp.spmatrix,
        kind: HypergraphKind,
        *,
        edge_weights: Optional[np.ndarray] = None,
        edge_keys: Optional[np.ndarray] = None,
    ) -> "Hypergraph":
        incidence = sp.csr_matrix(incidence, dtype=np.float64)
        incidence.sum_duplicates()
        incidence.sort_indices()
        if incidence.nnz and not np.all(incidence.data == 1.0):
            raise HypergraphError("incidence entries must be exactly 0 or 1")
        num_edges = incidence.shape[1]
        weights = np.ones(num_edges) if edge_weights is None else np.asarray(edge_weights, dtype=np.float64)
        if weights.shape != (num_edges,):
            raise HypergraphError(f"expected {num_edges} hyperedge weights, got {weights.shape}")
        edge_degrees = np.asarray(incidence.sum(axis=0)).ravel()
        empty = np.flatnonzero(edge_degrees == 0)
        if empty.size:
            raise HypergraphError(f"hyperedge {int(empty[0])} has no member nodes")
        node_degrees = incidence @ weights
        keys = np.arange(num_edges) if edge_keys is None else np.asarray(edge_keys)
        return cls(
            incidence=incidence,
            edge_weights=weights,
            node_degrees=node_degrees,
            edge_degrees=edge_degrees,
            kind=kind,
            edge_keys=keys,
        )


def build_link_hypergraph(g: Graph, include_center: bool = True) -> Hypergraph:
    """One hyperedge per node, holding its neighborhood (and itself by default).

    With ``include_center=False`` an isolated node would give an empty
    hyperedge; such hyperedges are dropped.
    """
    adjacency = g.adjacency.copy()
    if g.self_loops:
        adjacency.setdiag(0)
        adjacency.eliminate_zeros()
    if include_center:
        incidence = adjacency + sp.identity(g.num_nodes, format="csr")
        keys = np.arange(g.num_nodes)
    else:
        keep = np.flatnonzero(g.degrees > 0)
        incidence = adjacency[:, keep]
        keys = keep
        if keep.shape[0] < g.num_nodes:
            logger.warning(
                "dropped empty neighbor hyperedges",
                extra={"count": g.num_nodes - keep.shape[0]},
            )
    return Hypergraph.from_incidence(incidence, HypergraphKind.LINK, edge_keys=keys)


def build_degree_hypergraph(g: Graph) -> Hypergraph:
    """One hyperedge per distinct degree value, in ascending degree order."""
    values, inverse = np.unique(g.degrees, return_inverse=True)
    incidence = sp.csr_matrix(
        (np.ones(g.num_nodes), (np.arange(g.num_nodes), inverse)),
        shape=(g.num_nodes, values.shape[0]),
    )
    return Hypergraph.from_incidence(incidence, HypergraphKind.DEGREE, edge_keys=values)


def build_hypergraph(g: Graph, kind: Union[HypergraphKind, str], include_center: bool = True) -> Hypergraph:
    kind = HypergraphKind(kind)
    if kind is HypergraphKind.LINK:
        return build_link_hypergraph(g, include_center=include_center)
    return build_degree_hypergraph(g)


@dataclass(frozen=True, eq=False)
class PropagationOperator:
    matrix: sp.csr_matrix
    source_kind: HypergraphKind
    normalization: Normalization

    def to_torch(self, dtype: torch.dtype = torch.float32) -> torch.Tensor:
        coo = self.matrix.tocoo()
        indices = torch.from_numpy(np.vstack([coo.row, coo.col]).astype(np.int64))
        values = torch.from_numpy(coo.data).to(dtype)
        return torch.sparse_coo_tensor(indices, values, coo.shape).coalesce()


def _inverse_node_degrees(h: Hypergraph, power: float) -> np.ndarray:
    degrees = h.node_degrees
    zero = np.flatnonzero(degrees == 0)
    if zero.size:
        memberships = np.diff(h.incidence.indptr)
        weighted = zero[memberships[zero] > 0]
        if weighted.size:
            raise HypergraphError(
                f"node {int(weighted[0])} has zero degree from zero-weight hyperedges"
            )
        logger.warning("nodes outside every hyperedge get zero rows", extra={"count": int(zero.size)})
    inverse = np.zeros_like(degrees)
    nonzero = degrees != 0
    inverse[nonzero] = degrees[nonzero] ** -power
    return inverse


def propagation_operator(
    h: Hypergraph, normalization: Union[Normalization, str] = Normalization.ASYMMETRIC
) -> PropagationOperator:
    """Sparse ``D_v^-a H W D_e^-1 H^T D_v^-a`` with ``a = 1`` or ``a = 1/2``."""
    normalization = Normalization(normalization)
    power = 1.0 if normalization is Normalization.ASYMMETRIC else 0.5
    dv = sp.diags(_inverse_node_degrees(h, power))
    edge_scale = sp.diags(h.edge_weights / h.edge_degrees)
    matrix = dv @ h.incidence @ edge_scale @ h.incidence.T @ dv
    matrix = sp.csr_matrix(matrix)
    matrix.eliminate_zeros()
    matrix.sort_indices()
    return PropagationOperator(matrix=matrix, source_kind=h.kind, normalization=normalization)


def degree_histograms(h: Hypergraph) -> Dict[str, Dict[str, int]]:
    """Counts of node degrees and hyperedge sizes, keyed by value."""

    def histogram(values: np.ndarray) -> Dict[str, int]:
        keys, counts = np.unique(values, return_counts=True)
        return {f"{key:g}": int(count) for key, count in zip(keys, counts)}

    return {"node_degree": histogram(h.node_degrees), "edge_degree": histogram(h.edge_degrees)}


def export_incidence(h: Hypergraph, prefix: Union[str, Path], **header_extra) -> Tuple[Path, Path]:
    """Write ``<prefix>.tsv`` (``node_id edge_id weight`` rows) and ``<prefix>.json``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    rows_path = prefix.with_name(prefix.name + ".tsv")
    header_path = prefix.with_name(prefix.name + ".json")
    coo = h.incidence.tocoo()
    order = np.lexsort((coo.col, coo.row))
    with rows_path.open("w", encoding="utf-8") as fh:
        for node, edge in zip(coo.row[order], coo.col[order]):
            fh.write(f"{node}\t{edge}\t{h.edge_weights[edge]:.17g}\n")
    header = {
        "kind": h.kind.value,
        "N": h.num_nodes,
        "N_E": h.num_edges,
        "nnz": int(h.incidence.nnz),
        "histograms": degree_histograms(h),
        **header_extra,
    }
    header_path.write_text(json.dumps(header, indent=2, sort_keys=True), encoding="utf-8")
    return rows_path, header_path


def load_incidence(prefix: Union[str, Path]) -> Hypergraph:
    prefix = Path(prefix)
    header = json.loads(prefix.with_name(prefix.name + ".json").read_text(encoding="utf-8"))
    rows = np.loadtxt(prefix.with_name(prefix.name + ".tsv"), ndmin=2)
    num_nodes, num_edges = header["N"], header["N_E"]
    weights = np.ones(num_edges)
    if rows.size:
        weights[rows[:, 1].astype(np.int64)] = rows[:, 2]
    incidence = sp.csr_matrix(
        (np.ones(rows.shape[0]), (rows[:, 0].astype(np.int64), rows[:, 1].astype(np.int64))),
        shape=(num_nodes, num_edges),
    )
    return Hypergraph.from_incidence(incidence, HypergraphKind(header["kind"]), edge_weights=weights)
