"""Per-node structural feature matrices and their text file format."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np

from .errors import EmbeddingFormatError

logger = logging.getLogger(__name__)


class EmbeddingKind(str, Enum):
    ROLE = "role"
    ADJACENCY = "adjacency"


class Provenance(str, Enum):
    GENERATED = "generated"
    LOADED = "loaded"


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Dense ``N x F`` feature matrix (role ``X_r`` or adjacency ``X_a``)."""

    matrix: np.ndarray
    kind: EmbeddingKind
    provenance: Provenance = Provenance.GENERATED

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64, copy=True)
        if matrix.ndim != 2:
            raise EmbeddingFormatError(f"embedding matrix must be 2-D, got shape {matrix.shape}")
        if not np.all(np.isfinite(matrix)):
            row = int(np.flatnonzero(~np.isfinite(matrix).all(axis=1))[0])
            raise EmbeddingFormatError(f"{self.kind.value} embedding row {row} has non-finite entries")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def num_nodes(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def check_rows(self, num_nodes: int) -> None:
        if self.num_nodes != num_nodes:
            raise EmbeddingFormatError(
                f"{self.kind.value} embeddings have {self.num_nodes} rows, graph has {num_nodes} nodes"
            )


def save_embeddings(embeddings: EmbeddingSet, path: Union[str, Path]) -> Path:
    """Write the ``N F`` header followed by one row per node at full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        fh.write(f"{embeddings.num_nodes} {embeddings.dim}\n")
        np.savetxt(fh, embeddings.matrix, fmt="%.17g")
    return path


def load_embeddings(path: Union[str, Path], kind: Union[EmbeddingKind, str]) -> EmbeddingSet:
    kind = EmbeddingKind(kind)
    path = Path(path)
    if not path.exists():
        raise EmbeddingFormatError(f"embedding file not found: {path}")
    with path.open("r", encoding="utf-8") as fh:
        lines = [(lineno, line) for lineno, line in enumerate(fh.read().splitlines(), start=1) if line.strip()]
    if not lines:
        raise EmbeddingFormatError(f"{path}: empty file, expected an 'N F' header")
    header_lineno, header = lines[0]
    try:
        num_rows, dim = (int(tok) for tok in header.split())
    except ValueError as exc:
        raise EmbeddingFormatError(f"{path}:{header_lineno}: header must be 'N F', got {header!r}") from exc

    body = lines[1:]
    if len(body) != num_rows:
        raise EmbeddingFormatError(f"{path}: header declares {num_rows} rows, found {len(body)}")
    matrix = np.empty((num_rows, dim), dtype=np.float64)
    for i, (lineno, line) in enumerate(body):
        tokens = line.split()
        if len(tokens) != dim:
            raise EmbeddingFormatError(f"{path}:{lineno}: expected {dim} values, found {len(tokens)}")
        try:
            matrix[i] = [float(tok) for tok in tokens]
        except ValueError as exc:
            raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric token in {line!r}") from exc
    logger.info("loaded embeddings", extra={"path": str(path), "kind": kind.value, "rows": num_rows, "dim": dim})
    return EmbeddingSet(matrix=matrix, kind=kind, provenance=Provenance.LOADED)
