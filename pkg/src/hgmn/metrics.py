"""Micro-F1, improvement over a baseline, and table rendering."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.metrics import confusion_matrix

from .errors import DimensionError


@dataclass(frozen=True)
class ConfusionCounts:
    true_positive: np.ndarray
    false_positive: np.ndarray
    false_negative: np.ndarray
    total: int

    @classmethod
    def from_labels(cls, pred: Sequence[int], truth: Sequence[int]) -> "ConfusionCounts":
        pred = np.asarray(pred, dtype=np.int64)
        truth = np.asarray(truth, dtype=np.int64)
        if pred.shape != truth.shape:
            raise DimensionError(f"{pred.shape[0]} predictions for {truth.shape[0]} labels")
        if pred.size == 0:
            raise DimensionError("micro-F1 needs at least one sample")
        classes = np.union1d(pred, truth)
        matrix = confusion_matrix(truth, pred, labels=classes)
        tp = np.diag(matrix)
        return cls(
            true_positive=tp,
            false_positive=matrix.sum(axis=0) - tp,
            false_negative=matrix.sum(axis=1) - tp,
            total=int(truth.shape[0]),
        )

    def micro_f1(self) -> float:
        tp = int(self.true_positive.sum())
        fp = int(self.false_positive.sum())
        fn = int(self.false_negative.sum())
        if tp == 0:
            return 0.0
        # 2PR/(P+R) with micro P and R, written over the pooled counts.
        return 2 * tp / (2 * tp + fp + fn)


def micro_f1(pred: Sequence[int], truth: Sequence[int]) -> float:
    """Micro-averaged F1; equals accuracy for single-label predictions."""
    return ConfusionCounts.from_labels(pred, truth).micro_f1()


def predict(probabilities: np.ndarray) -> np.ndarray:
    """Row argmax; ties go to the lowest class id."""
    return np.asarray(probabilities).argmax(axis=1)


def improvement(p1: float, p2: float) -> Tuple[float, float]:
    """Absolute improvement ``p1 - p2`` and improvement ratio in percent."""
    if p2 <= 0:
        raise ValueError(f"baseline score must be positive, got {p2}")
    ai = p1 - p2
    return ai, ai / p2 * 100.0


def _pct(value: Optional[float]) -> Optional[float]:
    return None if value is None else round(100.0 * value, 2)


def render_report(
    rows: Sequence[Tuple[str, Mapping[str, Optional[float]]]],
    baseline_scores: Optional[Mapping[str, Tuple[float, float]]] = None,
) -> pd.DataFrame:
    """Table-style report: one row per model, scores as percentages.

    ``rows`` pairs a model label with ``{"mean", "std", "max"}`` fractions.
    ``baseline_scores`` maps baseline names to ``(mean, max)`` percentages; when
    given, baseline rows plus AI and IR rows (best model against best
    baseline, per column) are appended.
    """
    if not rows:
        raise ValueError("report needs at least one row")
    records = []
    for label, scores in rows:
        mean, std = _pct(scores.get("mean")), _pct(scores.get("std"))
        records.append(
            {
                "model": label,
                "mean": mean,
                "std": std,
                "max": _pct(scores.get("max")),
                "mean_std": None if mean is None else f"{mean:.2f} ± {std or 0.0:.2f}",
            }
        )
    table = pd.DataFrame.from_records(records, columns=["model", "mean", "std", "max", "mean_std"])
    if not baseline_scores:
        return table

    baselines = pd.DataFrame(
        [{"model": name, "mean": mean, "max": best, "mean_std": f"{mean:.2f}"} for name, (mean, best) in baseline_scores.items()]
    )
    extra: Dict[str, Dict[str, object]] = {"AI": {"model": "AI"}, "IR": {"model": "IR"}}
    for column in ("mean", "max"):
        ai, ir = improvement(float(table[column].max()), float(baselines[column].max()))
        extra["AI"][column] = round(ai, 2)
        extra["IR"][column] = round(ir, 2)
    return pd.concat([baselines, table, pd.DataFrame(list(extra.values()))], ignore_index=True)


def format_report(table: pd.DataFrame) -> str:
    """Aligned plain-text rendering."""
    return table.fillna("").to_string(index=False)
