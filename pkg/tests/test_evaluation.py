import json
import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from imugate.errors import ProtocolError
from imugate.evaluation import (
    ConfusionCounts,
    SubjectResult,
    WindowTruth,
    change_window,
    cost_model,
    format_table,
    metrics,
    relaxed_match,
    results_csv,
    results_json,
    window_flags,
)
from imugate.gate import WindowVerdict
from oracles import relaxed_oracle


def test_change_window():
    # windows [39j, 39j + 78)
    assert change_window(0, 78, 39) == 0
    assert change_window(77, 78, 39) == 0
    assert change_window(78, 78, 39) == 1
    assert change_window(117, 78, 39) == 2


def test_truth_from_change_points():
    t = WindowTruth.from_change_points([100], 400, 78, 39)
    assert t.n_windows == 9 and t.change_windows == (1,)
    assert [j for j in range(9) if t.contains[j]] == [1, 2]
    assert list(t.zone(0)) == [0, 1, 2, 3]
    # change points past the last window are dropped
    assert WindowTruth.from_change_points([399], 400, 78, 39).change_windows == ()


def test_fig5_examples():
    truth = WindowTruth.from_windows(10, [4])
    flags = [False] * 10
    flags[6] = True
    c = relaxed_match(flags, truth)
    assert (c.tp, c.fn) == (1, 0)
    flags = [False] * 10
    flags[2] = True
    c = relaxed_match(flags, truth)
    assert (c.fp, c.fn, c.tp) == (1, 1, 0)
    c = relaxed_match([False] * 10, WindowTruth.from_windows(10, []))
    assert c.tn == 10 and c.total == 10


def test_extra_hits_absorbed_and_zone_tn_excluded():
    truth = WindowTruth.from_windows(10, [4])
    c = relaxed_match([False, False, False, True, True, True, True, False, False, False], truth)
    assert (c.tp, c.fp, c.fn, c.tn) == (1, 0, 0, 6)


def test_mismatch_raises():
    with pytest.raises(ProtocolError):
        relaxed_match([False] * 3, WindowTruth.from_windows(4, []))
    bad = [WindowVerdict(1, 0, None, False)]
    with pytest.raises(ProtocolError):
        relaxed_match(bad, WindowTruth.from_windows(1, []))


truths = st.integers(1, 14).flatmap(
    lambda n: st.tuples(
        st.lists(st.booleans(), min_size=n, max_size=n),
        st.lists(st.integers(0, n - 1), max_size=3, unique=True),
    )
)


@given(truths)
def test_partition_and_oracle(case):
    flags, cws = case
    truth = WindowTruth.from_windows(len(flags), cws)
    c = relaxed_match(flags, truth)
    non_zone = len(flags) - sum(truth.zone_mask())
    assert c.total == len(cws) + non_zone
    assert (c.tp, c.fp, c.tn, c.fn) == relaxed_oracle(flags, sorted(cws))


@given(truths)
def test_shrinking_zone_never_increases_tp(case):
    flags, cws = case
    wide = relaxed_match(flags, WindowTruth.from_windows(len(flags), cws))
    narrow = relaxed_match(flags, WindowTruth.from_windows(len(flags), cws, before=0, after=1))
    assert narrow.tp <= wide.tp


@given(truths, st.randoms())
def test_verdict_order_within_window_irrelevant(case, rnd):
    flags, _ = case
    verdicts = [WindowVerdict(j, j, None, f) for j, f in enumerate(flags)]
    shuffled = list(verdicts)
    rnd.shuffle(shuffled)
    assert window_flags(shuffled, len(flags)) == window_flags(verdicts, len(flags)) == flags


def test_metrics():
    c = ConfusionCounts(tp=9, fn=1, tn=75, fp=25)
    assert (c.tpr, c.tnr) == (0.9, 0.75)
    assert (ConfusionCounts(3, 0, 5, 0).tpr, ConfusionCounts(3, 0, 5, 0).tnr) == (1.0, 1.0)
    m = metrics([ConfusionCounts(tp=10, tn=1), ConfusionCounts(tp=9, fn=1, tn=1)])
    assert m.tpr_mean == pytest.approx(0.95) and m.tpr_std == pytest.approx(0.05)
    # a subject without transitions only contributes TNR
    m = metrics([ConfusionCounts(tn=4, fp=1), ConfusionCounts(tp=1, tn=1)])
    assert m.n_tpr == 1 and m.tpr_mean == 1.0 and m.tnr_mean == pytest.approx(0.9)
    with pytest.raises(ValueError):
        metrics([])


def test_cost_model():
    r = cost_model(2966, 914, 16_000, 853_000)
    assert r.reduction == pytest.approx(0.673, abs=0.005)
    full = cost_model(100, 100, 16_000, 853_000)
    assert full.reduction == pytest.approx(-16_000 / 853_000)
    none = cost_model(100, 0, 16_000, 853_000)
    assert none.reduction == pytest.approx(1 - 16_000 / 853_000) and round(none.reduction, 3) == 0.981
    for bad in ((10, 11, 1, 1), (10, 5, 0, 1), (10, 5, 1, 0)):
        with pytest.raises(ValueError):
            cost_model(*bad)


@given(st.integers(1, 5000), st.integers(0, 5000), st.integers(0, 5000))
def test_cost_monotone(n, a, b):
    a, b = sorted((min(a, n), min(b, n)))
    assert cost_model(n, a, 16_000).reduction >= cost_model(n, b, 16_000).reduction


def test_reports():
    rs = [SubjectResult("S1", ConfusionCounts(2, 1, 10, 0), 13, 3), SubjectResult("S2", ConfusionCounts(0, 0, 5, 0), 5, 0)]
    summ = metrics(r.counts for r in rs)
    cost = cost_model(18, 3, 16_000)
    table = format_table(rs, summ, cost)
    assert "S1" in table and "reduction" in table
    csv_text = results_csv(rs, summ)
    assert csv_text.splitlines()[0].startswith("subject,tp,fn,fp,tn")
    assert csv_text.splitlines()[-1].startswith("ALL,2,0,1,15")
    doc = json.loads(results_json(rs, summ, cost, detector="gate"))
    assert doc["subjects"][1]["tpr"] is None and doc["detector"] == "gate"
    none = metrics([ConfusionCounts(tn=3)])
    assert json.loads(results_json([], none))["aggregate"]["tpr_mean"] is None
