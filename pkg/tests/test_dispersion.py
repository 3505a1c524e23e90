import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from imugate.dispersion import DispersionAccumulator, rank_features, score_feature
from imugate.errors import InsufficientDataError

values = st.floats(-1e3, 1e3, allow_nan=False)


def acc_of(xs):
    return DispersionAccumulator().extend(xs)


def batch(xs):
    n = len(xs)
    mu = math.fsum(xs) / n
    m2 = math.fsum((x - mu) ** 2 for x in xs)
    ssd = math.fsum((b - a) ** 2 for a, b in zip(xs, xs[1:]))
    return mu, m2, ssd, math.fsum(x * x for x in xs)


def test_update_examples():
    a = acc_of([1, 2, 3])
    assert (a.mu, a.m2) == (2.0, 2.0)
    assert a.variance() == 1.0
    assert a.mssd() == pytest.approx(2 / 3)
    c = acc_of([4.2] * 5)
    assert c.m2 == 0.0 and c.ssd_sum == 0.0 and c.variance() == 0.0 and c.mssd() == 0.0
    assert acc_of([1, 2]).ssd_sum == 1.0
    assert acc_of([0, 1, 0, 1]).mssd() == 0.75


def test_insufficient_data():
    a = acc_of([1.0])
    with pytest.raises(InsufficientDataError):
        a.variance()
    with pytest.raises(InsufficientDataError):
        a.mssd()


def test_update_and_extend_agree(rng):
    xs = rng.normal(size=300).tolist()
    a = DispersionAccumulator()
    for x in xs:
        a.update(x)
    b = acc_of(xs)
    assert (a.count, a.mu, a.m2, a.prev, a.ssd_sum, a.sq_sum) == (
        b.count, b.mu, b.m2, b.prev, b.ssd_sum, b.sq_sum
    )


@given(st.lists(values, min_size=2, max_size=300))
def test_matches_batch_oracle(xs):
    a = acc_of(xs)
    mu, m2, ssd, sq = batch(xs)
    assert a.count == len(xs)
    assert a.m2 >= 0 and a.ssd_sum >= 0 and a.sq_sum >= 0
    assert a.variance() == pytest.approx(m2 / (len(xs) - 1), rel=1e-9, abs=1e-9)
    assert a.mssd() == pytest.approx(ssd / len(xs), rel=1e-12, abs=1e-12)
    assert a.rms_squared() == pytest.approx(sq / len(xs), rel=1e-12)


def test_rank_single_informative_feature():
    t = np.arange(78)
    accs = [acc_of([1.0] * 78) for _ in range(12)]
    accs[7] = acc_of((5 * np.sin(2 * np.pi * t / 78)).tolist())
    assert rank_features(accs)[0] == 7


def test_rank_ties_by_index(rng):
    xs = rng.normal(size=50).tolist()
    assert rank_features([acc_of(xs) for _ in range(12)]) == list(range(12))


def test_rank_slow_sine_above_noise(rng):
    t = np.arange(200)
    slow = (10 * np.sin(2 * np.pi * t / 100)).tolist()
    noise = (0.1 * rng.normal(size=200)).tolist()
    sa, sb = score_feature(acc_of(slow), 0), score_feature(acc_of(noise), 1)
    # batch oracle for the scores
    for xs, s in ((slow, sa), (noise, sb)):
        mu, m2, ssd, sq = batch(xs)
        rms2 = sq / len(xs)
        expected = (m2 / (len(xs) - 1) / rms2) / (ssd / len(xs) / rms2 + 1e-12)
        assert s.score == pytest.approx(expected, rel=1e-9)
    assert rank_features([acc_of(noise), acc_of(slow)])[0] == 1


def test_zero_rms_is_never_selected():
    accs = [acc_of([0.0] * 10), acc_of([1.0, 1.0, 1.0, 1.0])]
    assert score_feature(accs[0], 0).score == -math.inf
    assert rank_features(accs) == [1, 0]


@given(
    st.lists(st.lists(values, min_size=5, max_size=40), min_size=2, max_size=12),
    st.lists(st.floats(0.01, 100), min_size=12, max_size=12),
)
def test_rank_scale_invariant(streams, scales):
    a = rank_features([acc_of(xs) for xs in streams])
    b = rank_features([acc_of([k * x for x in xs]) for xs, k in zip(streams, scales)])
    sa = [score_feature(acc_of(xs), i).score for i, xs in enumerate(streams)]
    # scaling changes scores by rounding only; compare where scores are well separated
    order_a = [i for i in a]
    for i, j in zip(order_a, order_a[1:]):
        if sa[i] - sa[j] > 1e-6 * max(1.0, abs(sa[i])):
            assert b.index(i) < b.index(j)


@given(st.lists(st.lists(values, min_size=3, max_size=20), min_size=1, max_size=12))
def test_rank_is_total_order(streams):
    accs = [acc_of(xs) for xs in streams]
    r = rank_features(accs)
    assert sorted(r) == list(range(len(accs)))
    scores = [score_feature(a, i).score for i, a in enumerate(accs)]
    for i, j in zip(r, r[1:]):
        assert scores[i] > scores[j] or (scores[i] == scores[j] and i < j)
