"""Adjacency embeddings: p/q-biased random walks plus skip-gram with negative sampling."""

from __future__ import annotations

import logging
from typing import Iterator, Optional, Tuple

import numpy as np
import torch
import torch.nn.functional as F
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat
from torch import nn

from .embeddings import EmbeddingKind, EmbeddingSet
from .errors import GraphFormatError
from .graph import Graph

logger = logging.getLogger(__name__)

PAD = -1


class WalkConfig(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    p: PositiveFloat = Field(1.0, description="Return parameter.")
    q: PositiveFloat = Field(1.0, description="In-out parameter.")
    walk_len: int = Field(80, ge=2)
    walks_per_node: int = Field(10, ge=1)
    window: int = Field(10, ge=1)
    dim: int = Field(128, ge=1, description="Embedding width F_a.")
    negatives_per_positive: int = Field(5, ge=1)
    epochs: int = Field(5, ge=1)
    learning_rate: PositiveFloat = 0.01
    batch_size: int = Field(4096, ge=1, description="Skip-gram pairs per optimizer step.")
    walks_per_chunk: int = Field(64, ge=1)
    seed: int = 0


def _walk_from(g: Graph, start: int, cfg: WalkConfig, rng: np.random.Generator) -> np.ndarray:
    offsets, cols = g.row_offsets, g.col_indices
    walk = np.full(cfg.walk_len, PAD, dtype=np.int64)
    walk[0] = start
    draws = rng.random(cfg.walk_len - 1)
    uniform = cfg.p == 1.0 and cfg.q == 1.0
    for i in range(1, cfg.walk_len):
        cur = walk[i - 1]
        nbrs = cols[offsets[cur] : offsets[cur + 1]]
        if nbrs.shape[0] == 0:
            break
        if uniform or i == 1:
            walk[i] = nbrs[int(draws[i - 1] * nbrs.shape[0])]
            continue
        prev = walk[i - 2]
        prev_nbrs = cols[offsets[prev] : offsets[prev + 1]]
        weights = np.where(np.isin(nbrs, prev_nbrs, assume_unique=True), 1.0, 1.0 / cfg.q)
        weights[nbrs == prev] = 1.0 / cfg.p
        cumulative = np.cumsum(weights)
        pick = np.searchsorted(cumulative, draws[i - 1] * cumulative[-1], side="right")
        walk[i] = nbrs[min(pick, nbrs.shape[0] - 1)]
    return walk


def generate_walks(g: Graph, cfg: WalkConfig) -> np.ndarray:
    """All walks as a ``(walks_per_node * N, walk_len)`` array padded with -1.

    Walk ``k`` from node ``v`` draws from its own stream seeded by
    ``(seed, k, v)``, so walks can be produced in any order.
    """
    walks = np.empty((cfg.walks_per_node * g.num_nodes, cfg.walk_len), dtype=np.int64)
    row = 0
    for walk_index in range(cfg.walks_per_node):
        for node in range(g.num_nodes):
            rng = np.random.default_rng([cfg.seed, walk_index, node])
            walks[row] = _walk_from(g, node, cfg, rng)
            row += 1
    return walks


def context_pairs(walks: np.ndarray, window: int) -> Tuple[np.ndarray, np.ndarray]:
    """(center, context) pairs within ``window`` steps in both directions."""
    centers, contexts = [], []
    for offset in range(1, min(window, walks.shape[1] - 1) + 1):
        left, right = walks[:, :-offset], walks[:, offset:]
        valid = (left != PAD) & (right != PAD)
        centers += [left[valid], right[valid]]
        contexts += [right[valid], left[valid]]
    if not centers:
        empty = np.empty(0, dtype=np.int64)
        return empty, empty
    return np.concatenate(centers), np.concatenate(contexts)


class SkipGram(nn.Module):
    """Input/output embedding tables trained with the negative-sampling objective."""

    def __init__(self, num_nodes: int, dim: int, generator: torch.Generator):
        super().__init__()
        self.input = nn.Embedding(num_nodes, dim, sparse=True)
        self.output = nn.Embedding(num_nodes, dim, sparse=True)
        with torch.no_grad():
            self.input.weight.uniform_(-0.5 / dim, 0.5 / dim, generator=generator)
            self.output.weight.zero_()

    def forward(self, centers: torch.Tensor, contexts: torch.Tensor, negatives: torch.Tensor) -> torch.Tensor:
        u = self.input(centers)
        positive = F.logsigmoid((u * self.output(contexts)).sum(-1))
        negative = F.logsigmoid(-torch.bmm(self.output(negatives), u.unsqueeze(-1)).squeeze(-1)).sum(-1)
        return -(positive + negative).mean()


def _batches(
    walks: np.ndarray, cfg: WalkConfig, generator: torch.Generator
) -> Iterator[Tuple[torch.Tensor, torch.Tensor]]:
    order = torch.randperm(walks.shape[0], generator=generator).numpy()
    for start in range(0, order.shape[0], cfg.walks_per_chunk):
        centers, contexts = context_pairs(walks[order[start : start + cfg.walks_per_chunk]], cfg.window)
        if centers.shape[0] == 0:
            continue
        shuffle = torch.randperm(centers.shape[0], generator=generator)
        centers_t = torch.from_numpy(centers)[shuffle]
        contexts_t = torch.from_numpy(contexts)[shuffle]
        for lo in range(0, centers_t.shape[0], cfg.batch_size):
            yield centers_t[lo : lo + cfg.batch_size], contexts_t[lo : lo + cfg.batch_size]


def train_skipgram(walks: np.ndarray, num_nodes: int, cfg: WalkConfig) -> np.ndarray:
    """Return the input embedding table after ``cfg.epochs`` passes over the walks."""
    generator = torch.Generator().manual_seed(cfg.seed)
    model = SkipGram(num_nodes, cfg.dim, generator)
    frequency = np.bincount(walks[walks != PAD], minlength=num_nodes).astype(np.float64)
    noise = torch.from_numpy(frequency**0.75)
    if not (walks[:, 1:] != PAD).any():
        return model.input.weight.detach().numpy().astype(np.float64)

    optimizer = torch.optim.SparseAdam(model.parameters(), lr=cfg.learning_rate)
    for epoch in range(cfg.epochs):
        total, steps = 0.0, 0
        for centers, contexts in _batches(walks, cfg, generator):
            negatives = torch.multinomial(
                noise, centers.shape[0] * cfg.negatives_per_positive, replacement=True, generator=generator
            ).view(centers.shape[0], cfg.negatives_per_positive)
            optimizer.zero_grad()
            loss = model(centers, contexts, negatives)
            loss.backward()
            optimizer.step()
            total += float(loss)
            steps += 1
        logger.debug("skip-gram epoch", extra={"epoch": epoch, "mean_loss": total / max(steps, 1)})
    return model.input.weight.detach().numpy().astype(np.float64)


def adjacency_embeddings(g: Graph, cfg: Optional[WalkConfig] = None) -> EmbeddingSet:
    """Adjacency features ``X_a`` (``N x cfg.dim``), deterministic in ``cfg.seed``.

    Nodes without neighbors produce no walk steps and keep their initial row.
    """
    cfg = cfg or WalkConfig()
    if g.num_nodes < 2:
        raise GraphFormatError("adjacency embeddings need at least two nodes")
    isolated = int(np.count_nonzero(g.degrees == 0))
    if isolated:
        logger.warning(
            "nodes without neighbors keep their initial embedding",
            extra={"isolated": isolated, "nodes": g.num_nodes},
        )
    walks = generate_walks(g, cfg)
    matrix = train_skipgram(walks, g.num_nodes, cfg)
    logger.info(
        "computed adjacency embeddings",
        extra={"nodes": g.num_nodes, "walks": walks.shape[0], "dim": cfg.dim, "p": cfg.p, "q": cfg.q},
    )
    return EmbeddingSet(matrix=matrix, kind=EmbeddingKind.ADJACENCY)
