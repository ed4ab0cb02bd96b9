import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles as O
from adgsyn.errors import EmptyInput, KOutOfRange, LengthMismatch
from adgsyn.metrics import (
    ConfusionCounts,
    EpochTimer,
    MetricsReport,
    aggregate_reports,
    auroc,
    aupr,
    classification_metrics,
    confusion,
    format_table,
    speedup,
    timing,
)

scored = st.lists(st.tuples(st.integers(0, 6).map(lambda v: v / 6), st.integers(0, 1)), min_size=2, max_size=40)


@given(scored)
def test_auroc_matches_pairwise(rows):
    s, y = zip(*rows)
    if len(set(y)) < 2:
        assert auroc(s, y) is None
    else:
        assert auroc(s, y) == pytest.approx(O.auroc_pairwise(s, y), abs=1e-12)


@given(scored)
def test_aupr_matches_enumeration(rows):
    s, y = zip(*rows)
    if sum(y) == 0:
        assert aupr(s, y) is None
    else:
        assert aupr(s, y) == pytest.approx(O.aupr_enumeration(s, y), abs=1e-12)


def test_perfect_ranking_is_exactly_one():
    s = np.linspace(0, 1, 11)
    y = (s > 0.5).astype(int)
    assert auroc(s, y) == 1.0 and aupr(s, y) == 1.0


def test_all_tied_auroc_is_half():
    assert auroc([0.3] * 6, [0, 1, 0, 1, 1, 0]) == 0.5


def test_kappa_worked_example():
    m = classification_metrics(ConfusionCounts(tp=40, tn=30, fp=10, fn=20))
    assert m["kappa"] == 0.4
    assert m["acc"] == 0.7
    assert m["prec"] == 0.8
    assert m["tpr"] == pytest.approx(40 / 60)
    assert m["bacc"] == pytest.approx((40 / 60 + 0.75) / 2)


def test_threshold_is_inclusive():
    c = confusion([0.5, 0.49], [1, 0])
    assert (c.tp, c.tn, c.fp, c.fn) == (1, 1, 0, 0)


def test_undefined_values_are_flagged_not_nan():
    r = MetricsReport.from_predictions([0.1, 0.2], [0, 0])
    assert r.auroc is None and r.aupr is None and r.tpr is None and r.prec is None
    assert any(f.startswith("auroc") for f in r.flags)
    assert r.acc == 1.0


def test_input_validation():
    with pytest.raises(LengthMismatch):
        auroc([0.1, 0.2], [1])
    with pytest.raises(EmptyInput):
        auroc([], [])
    with pytest.raises(ValueError):
        confusion([0.1], [2])


def test_aggregate_and_table():
    reports = [MetricsReport.from_predictions([0.9, 0.2, 0.7, 0.4], [1, 0, 1, y]) for y in (0, 1)]
    agg = aggregate_reports(reports)
    assert agg["auroc"]["n"] == 2
    assert agg["acc"]["mean"] == pytest.approx(0.875)
    assert agg["acc"]["std"] == pytest.approx(np.std([1.0, 0.75], ddof=1))
    table = format_table(agg)
    assert table.splitlines()[0].split(" | ")[0].strip() == "AUROC"
    assert "0.88 ± 0.18" in table


def test_timing_and_speedup():
    assert timing([4, 4, 4, 4], 4) == {"T_train": 4.0, "C_train": 16.0}
    assert timing([1, 2, 3], 2)["C_train"] == 3.0
    with pytest.raises(KOutOfRange):
        timing([1, 2], 3)
    with pytest.raises(KOutOfRange):
        timing([1, 2], 0)
    assert speedup(1231.0, 398.0) == pytest.approx(3.093, abs=1e-3)


def test_epoch_timer():
    timer = EpochTimer()
    for _ in range(3):
        with timer:
            pass
    s = timer.summary()
    assert s["epochs"] == 3 and s["C_train"] > 0
    with pytest.raises(RuntimeError):
        EpochTimer().stop()
