import numpy as np
import pandas as pd
import pytest
from hypothesis import given
from hypothesis import strategies as st
from sklearn.metrics import f1_score

from hgmn.errors import DimensionError
from hgmn.metrics import ConfusionCounts, format_report, improvement, micro_f1, predict, render_report


def test_micro_f1_examples():
    assert micro_f1([0, 1, 2], [0, 1, 2]) == 1.0
    assert micro_f1([0, 0, 1, 1], [0, 1, 1, 1]) == 0.75
    assert micro_f1([1, 1], [0, 0]) == 0.0


@given(
    st.integers(min_value=1, max_value=200).flatmap(
        lambda n: st.tuples(
            st.lists(st.integers(0, 4), min_size=n, max_size=n),
            st.lists(st.integers(0, 4), min_size=n, max_size=n),
        )
    )
)
def test_micro_f1_equals_accuracy(pair):
    pred, truth = map(np.asarray, pair)

    assert micro_f1(pred, truth) == np.mean(pred == truth)


def test_micro_f1_agrees_with_sklearn():
    rng = np.random.default_rng(0)
    for _ in range(20):
        truth = rng.integers(0, 6, size=300)
        pred = np.where(rng.random(300) < 0.6, truth, rng.integers(0, 6, size=300))
        assert micro_f1(pred, truth) == pytest.approx(f1_score(truth, pred, average="micro"), abs=1e-12)


def test_confusion_counts():
    counts = ConfusionCounts.from_labels([0, 0, 1, 1], [0, 1, 1, 1])

    assert counts.true_positive.tolist() == [1, 2]
    assert counts.false_positive.tolist() == [1, 0]
    assert counts.false_negative.tolist() == [0, 1]
    assert counts.total == 4


def test_micro_f1_rejects_bad_inputs():
    with pytest.raises(DimensionError, match="2 predictions for 3 labels"):
        micro_f1([0, 1], [0, 1, 1])
    with pytest.raises(DimensionError, match="at least one"):
        micro_f1([], [])


def test_predict_breaks_ties_toward_lowest_class():
    probabilities = np.array([[0.4, 0.4, 0.2], [0.1, 0.45, 0.45], [0.2, 0.3, 0.5]])

    assert predict(probabilities).tolist() == [0, 1, 2]


@pytest.mark.parametrize(
    "scores, expected",
    [((73.14, 72.26), (0.88, 1.22)), ((63.23, 58.72), (4.51, 7.68))],
)
def test_improvement_over_baseline(scores, expected):
    ai, ir = improvement(*scores)

    assert (round(ai, 2), round(ir, 2)) == expected


def test_improvement_needs_positive_baseline():
    with pytest.raises(ValueError, match="positive"):
        improvement(50.0, 0.0)


def test_report_lists_models_as_percentages():
    table = render_report([("HGMN (L)", {"mean": 0.7314, "std": 0.0123, "max": 0.75})])

    row = table.iloc[0]
    assert row["model"] == "HGMN (L)"
    assert row["mean"] == pytest.approx(73.14)
    assert row["max"] == pytest.approx(75.0)
    assert row["mean_std"] == "73.14 ± 1.23"


def test_report_appends_baselines_and_improvement_rows():
    table = render_report(
        [("HGMN (L)", {"mean": 0.7314, "std": 0.01, "max": 0.75})],
        {"GraphWave": (72.26, 74.0), "Node2vec": (60.0, 61.0)},
    )

    assert table["model"].tolist() == ["GraphWave", "Node2vec", "HGMN (L)", "AI", "IR"]
    ai = table.set_index("model").loc["AI"]
    ir = table.set_index("model").loc["IR"]
    assert ai["mean"] == pytest.approx(0.88)
    assert ir["mean"] == pytest.approx(1.22)
    assert ai["max"] == pytest.approx(1.0)


def test_report_survives_csv(tmp_path):
    table = render_report([("HGMN (D)/residual", {"mean": 0.5, "std": 0.0, "max": 0.5})])
    path = tmp_path / "report.csv"

    table.to_csv(path, index=False)

    back = pd.read_csv(path)
    assert back["model"].tolist() == ["HGMN (D)/residual"]
    assert "HGMN (D)/residual" in format_report(table)


def test_report_needs_rows():
    with pytest.raises(ValueError):
        render_report([])
