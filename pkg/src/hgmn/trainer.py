"""Training loop, multi-trial aggregation and parameter sweeps."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import torch
from pydantic import BaseModel, ConfigDict, Field, NonNegativeFloat, PositiveFloat, ValidationError

from .autodiff import Tape, backward
from .embeddings import EmbeddingKind, EmbeddingSet, load_embeddings
from .errors import ConfigError, DivergenceError, NonFiniteError, SplitError
from .fusion import FeatureSource, TokenOrder
from .graph import Graph, SplitSpec, sample_split
from .graphwave import WaveletConfig, role_embeddings
from .hypergraph import (
    Hypergraph,
    HypergraphKind,
    Normalization,
    PropagationOperator,
    build_hypergraph,
    propagation_operator,
)
from .metrics import micro_f1, predict
from .model import Activation, HgmnModel, ResidualSource, loss
from .node2vec import WalkConfig, adjacency_embeddings
from .optim import Adam
from .settings import DEFAULT_SEED

logger = logging.getLogger(__name__)

_DTYPES = {"float32": torch.float32, "float64": torch.float64}


class TrainConfig(BaseModel):
    """Everything that determines one training run."""

    model_config = ConfigDict(extra="forbid")

    hypergraph_kind: HypergraphKind = Field(HypergraphKind.LINK, description="Neighbor-link or degree hyperedges.")
    include_center: bool = Field(True, description="Put each node in its own neighbor hyperedge.")
    normalization: Normalization = Normalization.ASYMMETRIC
    wavelet: WaveletConfig = Field(default_factory=WaveletConfig)
    walk: WalkConfig = Field(default_factory=WalkConfig)
    role_path: Optional[Path] = Field(None, description="Precomputed role embeddings to load instead.")
    adjacency_path: Optional[Path] = Field(None, description="Precomputed adjacency embeddings to load instead.")

    hidden_dim: int = Field(64, ge=1, description="Fused width F_h.")
    state_dim: int = Field(16, ge=1, description="SSM states per channel.")
    conv_hidden_dim: Optional[int] = Field(None, ge=1, description="Width between convolutions; defaults to F_h.")
    num_layers: int = Field(2, ge=0)
    activation: Activation = Activation.RELU
    final_activation: Activation = Activation.IDENTITY
    token_order: TokenOrder = TokenOrder.ROLE_FIRST
    feature_source: FeatureSource = FeatureSource.BOTH
    residual_source: ResidualSource = ResidualSource.FUSED

    lr: PositiveFloat = 0.003
    weight_decay: NonNegativeFloat = 5e-4
    lambda_reg: NonNegativeFloat = Field(0.0, description="Coefficient of the squared-L2 term in the loss.")
    max_epochs: int = Field(500, ge=1)
    patience: int = Field(50, ge=1)
    seed: int = DEFAULT_SEED
    dtype: Literal["float32", "float64"] = "float32"

    disable_residual: bool = False
    disable_mamba: bool = False

    train_fraction: float = Field(0.7, gt=0.0, le=1.0)
    val_fraction: float = Field(0.2, ge=0.0, lt=1.0)
    imbalance_cap: Optional[float] = Field(0.33, gt=0.0, le=1.0)

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "TrainConfig":
        try:
            return cls.model_validate(dict(data))
        except ValidationError as exc:
            problems = "; ".join(
                f"{'.'.join(str(part) for part in err['loc'])}: {err['msg']}" for err in exc.errors()
            )
            raise ConfigError(f"invalid config: {problems}") from exc

    def with_updates(self, **updates: Any) -> "TrainConfig":
        return self.from_mapping({**self.model_dump(), **updates})

    @property
    def variant_suffix(self) -> str:
        parts = []
        if self.feature_source is not FeatureSource.BOTH:
            parts.append(f"{self.feature_source.value} only")
        if self.disable_residual:
            parts.append("residual")
        if self.disable_mamba:
            parts.append("mamba block")
        return "".join(f"/{part}" for part in parts)

    @property
    def variant_name(self) -> str:
        return "HGMN" + self.variant_suffix

    @property
    def model_label(self) -> str:
        return f"HGMN ({self.hypergraph_kind.letter})" + self.variant_suffix

    def split_spec(self, seed: int) -> SplitSpec:
        return SplitSpec(
            seed=seed,
            train_fraction=self.train_fraction,
            val_fraction=self.val_fraction,
            imbalance_cap=self.imbalance_cap,
        )


class EpochRecord(BaseModel):
    epoch: int
    loss: float
    train_f1: float = Field(ge=0.0, le=1.0)
    val_f1: Optional[float] = Field(None, ge=0.0, le=1.0)


class RunMetrics(BaseModel):
    variant: str
    label: str
    seed: int
    epochs_run: int
    best_epoch: int
    train_f1: float = Field(ge=0.0, le=1.0)
    val_f1: Optional[float] = Field(None, ge=0.0, le=1.0)
    test_f1: Optional[float] = Field(None, ge=0.0, le=1.0)
    gate_mean: Tuple[float, float] = Field(description="Mean (role, adjacency) gate of the returned model.")
    history: List[EpochRecord] = Field(default_factory=list)
    wall_time: float = Field(0.0, exclude=True)

    @property
    def headline(self) -> float:
        """Test score, falling back to validation then training."""
        for value in (self.test_f1, self.val_f1, self.train_f1):
            if value is not None:
                return value
        return self.train_f1


class AggregateMetrics(BaseModel):
    variant: str
    label: str
    trials: int = Field(ge=1)
    failed_trials: int = Field(0, ge=0)
    mean: Optional[float] = Field(None, ge=0.0, le=1.0)
    std: Optional[float] = Field(None, ge=0.0)
    max: Optional[float] = Field(None, ge=0.0, le=1.0)
    best_seed: Optional[int] = Field(None, description="Seed of the first trial reaching ``max``.")
    runs:List[RunMetrics] = Field(default_factory=list)

    def scores(self) -> Dict[str, Optional[float]]:
        return {"mean": self.mean, "std": self.std, "max": self.max}


@dataclass(frozen=True)
class PipelineInputs:
    hypergraph: Hypergraph
    operator: PropagationOperator
    role: EmbeddingSet
    adjacency: EmbeddingSet


def prepare_inputs(
    g: Graph,
    cfg: TrainConfig,
    *,
    role: Optional[EmbeddingSet] = None,
    adjacency: Optional[EmbeddingSet] = None,
) -> PipelineInputs:
    """Build the hypergraph and operator, and generate or load both embeddings."""
    hypergraph = build_hypergraph(g, cfg.hypergraph_kind, include_center=cfg.include_center)
    operator = propagation_operator(hypergraph, cfg.normalization)
    if role is None:
        role = load_embeddings(cfg.role_path, EmbeddingKind.ROLE) if cfg.role_path else role_embeddings(g, cfg.wavelet)
    if adjacency is None:
        adjacency = (
            load_embeddings(cfg.adjacency_path, EmbeddingKind.ADJACENCY)
            if cfg.adjacency_path
            else adjacency_embeddings(g, cfg.walk)
        )
    role.check_rows(g.num_nodes)
    adjacency.check_rows(g.num_nodes)
    logger.info(
        "prepared inputs",
        extra={
            "kind": hypergraph.kind.value,
            "nodes": hypergraph.num_nodes,
            "hyperedges": hypergraph.num_edges,
            "role_dim": role.dim,
            "adjacency_dim": adjacency.dim,
        },
    )
    return PipelineInputs(hypergraph=hypergraph, operator=operator, role=role, adjacency=adjacency)


def build_model(cfg: TrainConfig, inputs: PipelineInputs, num_classes: int) -> HgmnModel:
    return HgmnModel(
        inputs.role.dim,
        inputs.adjacency.dim,
        num_classes,
        hidden_dim=cfg.hidden_dim,
        state_dim=cfg.state_dim,
        num_layers=cfg.num_layers,
        conv_hidden_dim=cfg.conv_hidden_dim,
        activation=cfg.activation,
        final_activation=cfg.final_activation,
        token_order=cfg.token_order,
        feature_source=cfg.feature_source,
        residual_source=cfg.residual_source,
        disable_mamba=cfg.disable_mamba,
        disable_residual=cfg.disable_residual,
        seed=cfg.seed,
        dtype=_DTYPES[cfg.dtype],
    )


@dataclass
class _Tensors:
    operator: torch.Tensor
    role: torch.Tensor
    adjacency: torch.Tensor

    @classmethod
    def from_inputs(cls, inputs: PipelineInputs, dtype: torch.dtype) -> "_Tensors":
        return cls(
            operator=inputs.operator.to_torch(dtype),
            role=torch.tensor(inputs.role.matrix, dtype=dtype),
            adjacency=torch.tensor(inputs.adjacency.matrix, dtype=dtype),
        )


def _f1(pred: np.ndarray, labels: np.ndarray, ids: np.ndarray) -> Optional[float]:
    return micro_f1(pred[ids], labels[ids]) if ids.shape[0] else None


def evaluate(model: HgmnModel, inputs: PipelineInputs, g: Graph, split: SplitSpec) -> Dict[str, Optional[float]]:
    """Micro-F1 of a frozen model on each part of ``split``."""
    tensors = _Tensors.from_inputs(inputs, model.dtype)
    model.eval()
    with torch.no_grad():
        pred = predict(model(tensors.operator, tensors.role, tensors.adjacency).probabilities.numpy())
    return {
        "train": _f1(pred, g.labels, split.train_ids),
        "val": _f1(pred, g.labels, split.val_ids),
        "test": _f1(pred, g.labels, split.test_ids),
    }


def _check_split(g: Graph, split: SplitSpec) -> None:
    if g.labels is None:
        raise SplitError("training needs a labeled graph")
    if split.train_ids.shape[0] == 0:
        raise SplitError("training split is empty")
    for name, ids in (("train", split.train_ids), ("val", split.val_ids), ("test", split.test_ids)):
        if ids.shape[0] and ids.max() >= g.num_nodes:
            raise SplitError(f"{name} split references node {int(ids.max())} outside the graph")
        if name != "test" and ids.shape[0] and (g.labels[ids] < 0).any():
            raise SplitError(f"{name} split contains unlabeled nodes")


def train(
    g: Graph,
    split: SplitSpec,
    cfg: TrainConfig,
    inputs: Optional[PipelineInputs] = None,
) -> Tuple[HgmnModel, RunMetrics]:
    """Fit one model and return the epoch with the best validation micro-F1.

    Without validation nodes the training micro-F1 selects the epoch.
    """
    started = time.perf_counter()
    _check_split(g, split)
    inputs = inputs or prepare_inputs(g, cfg)
    model = build_model(cfg, inputs, g.num_classes)
    tensors = _Tensors.from_inputs(inputs, model.dtype)
    labels_np = np.asarray(g.labels)
    labels = torch.tensor(labels_np.clip(min=0), dtype=torch.long)
    train_ids = torch.tensor(split.train_ids, dtype=torch.long)

    active = model.named_active_parameters()
    active_tensors = [param for _, param in active]
    optimizer = Adam(active, lr=cfg.lr, weight_decay=cfg.weight_decay)
    tape = Tape(active)

    history: List[EpochRecord] = []
    best_score, best_epoch, best_state = -1.0, 0, None
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        try:
            with tape:
                out = model(tensors.operator, tensors.role, tensors.adjacency)
                objective = loss(out.probabilities, labels, train_ids, active_tensors, cfg.lambda_reg)
        except NonFiniteError as exc:
            raise DivergenceError(epoch, f"epoch {epoch}: {exc}") from exc
        value = float(objective)
        if not math.isfinite(value):
            raise DivergenceError(epoch, f"loss became {value} at epoch {epoch}")

        pred = predict(out.probabilities.detach().numpy())
        train_f1 = _f1(pred, labels_np, split.train_ids)
        val_f1 = _f1(pred, labels_np, split.val_ids)
        history.append(EpochRecord(epoch=epoch, loss=value, train_f1=train_f1, val_f1=val_f1))
        score = val_f1 if val_f1 is not None else train_f1
        if score > best_score:
            best_score, best_epoch = score, epoch
            best_state = {name: tensor.detach().clone() for name, tensor in model.state_dict().items()}
        elif epoch - best_epoch >= cfg.patience:
            logger.info("early stop", extra={"epoch": epoch, "best_epoch": best_epoch, "score": best_score})
            break

        grads = backward(tape, objective)
        for name, param in active:
            param.grad = grads[name]
        try:
            optimizer.step()
        except NonFiniteError as exc:
            raise DivergenceError(epoch, f"epoch {epoch}: {exc}") from exc
        logger.debug(
            "epoch finished",
            extra={"epoch": epoch, "loss": value, "train_f1": train_f1, "val_f1": val_f1},
        )

    model.load_state_dict(best_state)
    model.eval()
    with torch.no_grad():
        final = model(tensors.operator, tensors.role, tensors.adjacency)
    pred = predict(final.probabilities.numpy())
    gates = final.fusion.gates.mean(dim=0).tolist()
    metrics = RunMetrics(
        variant=cfg.variant_name,
        label=cfg.model_label,
        seed=cfg.seed,
        epochs_run=len(history),
        best_epoch=best_epoch,
        train_f1=_f1(pred, labels_np, split.train_ids),
        val_f1=_f1(pred, labels_np, split.val_ids),
        test_f1=_f1(pred, labels_np, split.test_ids),
        gate_mean=(gates[0], gates[1]),
        history=history,
        wall_time=time.perf_counter() - started,
    )
    logger.info(
        "training finished",
        extra={
            "variant": metrics.variant,
            "seed": cfg.seed,
            "best_epoch": best_epoch,
            "train_f1": metrics.train_f1,
            "val_f1": metrics.val_f1,
            "test_f1": metrics.test_f1,
        },
    )
    return model, metrics


def aggregate(cfg: TrainConfig, runs: Sequence[RunMetrics], trials: int, failed: int) -> AggregateMetrics:
    scores = np.asarray([run.headline for run in runs], dtype=np.float64)
    return AggregateMetrics(
        variant=cfg.variant_name,
        label=cfg.model_label,
        trials=trials,
        failed_trials=failed,
        mean=float(scores.mean()) if scores.size else None,
        std=float(scores.std()) if scores.size else None,
        max=float(scores.max()) if scores.size else None,
        best_seed=runs[int(np.argmax(scores))].seed if scores.size else None,
        runs=list(runs),
    )


def multi_trial(
    g: Graph,
    cfg: TrainConfig,
    trials: int,
    inputs: Optional[PipelineInputs] = None,
) -> Tuple[AggregateMetrics, Optional[HgmnModel]]:
    """Train on ``trials`` fresh splits (seed ``cfg.seed + k``) and aggregate.

    Diverged trials are counted in ``failed_trials``. Also returns the model of
    the best trial, or ``None`` if every trial diverged.
    """
    if trials < 1:
        raise ConfigError(f"trials must be >= 1, got {trials}")
    inputs = inputs or prepare_inputs(g, cfg)
    runs: List[RunMetrics] = []
    failed = 0
    best_model, best_score = None, -1.0
    for trial in range(trials):
        seed = cfg.seed + trial
        split = sample_split(g, cfg.split_spec(seed))
        try:
            model, run = train(g, split, cfg.with_updates(seed=seed), inputs)
        except DivergenceError as exc:
            failed += 1
            logger.warning("trial diverged", extra={"trial": trial, "seed": seed, "epoch": exc.epoch})
            continue
        runs.append(run)
        if run.headline > best_score:
            best_model, best_score = model, run.headline
    result = aggregate(cfg, runs, trials, failed)
    logger.info(
        "trials finished",
        extra={"variant": result.variant, "trials": trials, "failed": failed, "mean": result.mean, "max": result.max},
    )
    return result, best_model


SWEEPABLE = {"lr": "lr", "lambda_reg": "lambda_reg", "F_h": "hidden_dim", "hidden_dim": "hidden_dim", "num_layers": "num_layers"}


def sweep(
    g: Graph,
    cfg: TrainConfig,
    param: str,
    values: Sequence[float],
    trials: int = 1,
    inputs: Optional[PipelineInputs] = None,
) -> pd.DataFrame:
    """One ``multi_trial`` per value; one table row per value."""
    field = SWEEPABLE.get(param)
    if field is None:
        raise ConfigError(f"unknown sweep parameter {param!r}; expected one of {sorted(SWEEPABLE)}")
    inputs = inputs or prepare_inputs(g, cfg)
    rows = []
    for value in values:
        result, _ = multi_trial(g, cfg.with_updates(**{field: value}), trials, inputs)
        rows.append(
            {
                "param": param,
                "value": value,
                "mean": result.mean,
                "std": result.std,
                "max": result.max,
                "trials": result.trials,
                "failed_trials": result.failed_trials,
            }
        )
    return pd.DataFrame(rows, columns=["param", "value", "mean", "std", "max", "trials", "failed_trials"])
