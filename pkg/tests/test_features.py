import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from imugate.errors import DegenerateInputError
from imugate.features import (
    FEATURE_NAMES,
    ChannelStats,
    Derivative,
    FeatureExtractor,
    Sample,
    euclidean_norm,
    extrema_step,
    gravity_components,
    mean_crossing_step,
)

finite = st.floats(-50, 50, allow_nan=False)


def run(extractor, rows):
    return [extractor.extract(Sample(t, r[:3], r[3:])) for t, r in enumerate(rows)]


@pytest.mark.parametrize("v,expected", [((3, 4, 0), 5.0), ((0, 0, 0), 0.0), ((1, 2, 2), 3.0)])
def test_euclidean_norm(v, expected):
    assert euclidean_norm(v) == expected


@pytest.mark.parametrize(
    "a,expected", [((0, 0, 1), (0, 0, 1)), ((1, 0, 0), (1, 0, 0)), ((0, 1, 0), (0, 1, 0))]
)
def test_gravity_axes(a, expected):
    assert gravity_components(a) == pytest.approx(expected, abs=1e-12)


def test_gravity_matches_angle_formulas():
    a = (0.3, -0.4, 0.8)
    n = math.sqrt(sum(x * x for x in a))
    phi = math.atan2(a[1], a[2])
    theta = math.asin(a[0] / n)
    expected = (math.sin(theta), math.cos(theta) * math.sin(phi), math.cos(theta) * math.cos(phi))
    assert gravity_components(a) == pytest.approx(expected, abs=1e-12)


def test_gravity_zero_norm_raises():
    with pytest.raises(DegenerateInputError):
        gravity_components((0.0, 0.0, 0.0))


@given(st.tuples(finite, finite, finite).filter(lambda a: euclidean_norm(a) > 1e-6))
def test_gravity_unit_norm(a):
    g = gravity_components(a)
    assert math.isclose(euclidean_norm(g), 1.0, rel_tol=0, abs_tol=1e-9)


def test_derivative():
    d = Derivative()
    assert d.update(7.0) == 0.0
    d = Derivative()
    d.update(1.0)
    assert d.update(3.5) == 2.5
    assert d.update(3.5) == 0.0


def test_mean_crossing_decay_and_accumulate():
    # no crossing: previous and current sample on the same side of the mean
    assert mean_crossing_step(10.0, 4.0, 5.0, 3.0, 0.1, 0.8) == pytest.approx(8.0)
    # upward crossing: previous below avg - hyst, current above avg + hyst
    assert mean_crossing_step(0.0, 1.0, 5.0, 3.0, 0.1, 0.8) == pytest.approx(2.0)
    # downward crossing accumulates the magnitude too
    assert mean_crossing_step(0.0, 5.0, 1.0, 3.0, 0.1, 0.8) == pytest.approx(2.0)


def test_mean_crossing_constant_stream_stays_zero():
    cs = ChannelStats()
    for _ in range(50):
        cs.update(2.0)
    assert cs.mc == 0.0


def test_extrema_step():
    mx, mn = extrema_step(10.0, 0.0, 2.0, 4.0, 0.7)
    assert mx == pytest.approx(4 + 0.7 * 6)  # 8.2
    mx, mn = extrema_step(5.0, 0.0, 9.0, 4.0, 0.7)
    assert mx == 9.0


def test_static_stream_fixed_point():
    fx = FeatureExtractor()
    feats = run(fx, [(0, 0, 1, 0, 0, 0)] * 30)
    last = feats[-1]
    assert last.norm_a == 1.0 and last.norm_w == 0.0
    assert (last.der_ax, last.der_wy, last.der_normw) == (0.0, 0.0, 0.0)
    assert (last.g_x, last.g_y, last.g_z) == pytest.approx((0, 0, 1))
    assert last.mc_wx == last.mc_wy == 0.0
    assert last.p2p_norma == last.p2p_wx == 0.0


def test_single_sample_initialisation():
    f = FeatureExtractor().extract(Sample(0, (0.3, 0.2, 0.9), (5.0, -3.0, 1.0)))
    assert (f.der_ax, f.der_wy, f.der_normw) == (0.0, 0.0, 0.0)
    assert f.p2p_norma == f.p2p_wx == 0.0
    assert f.mc_wx == f.mc_wy == 0.0


def _ax_sine(n=78, rate=26.0, freq=1.0):
    return [(math.sin(2 * math.pi * freq * t / rate), 0.0, 0.0, 0.0, 0.0, 0.0) for t in range(n)]


def test_p2p_without_decay_equals_batch_range():
    rows = _ax_sine()
    feats = run(FeatureExtractor(gamma_p2p=1.0), rows)
    norms = [f.norm_a for f in feats]
    assert feats[-1].p2p_norma == pytest.approx(max(norms) - min(norms), rel=0.05)
    assert feats[-1].p2p_norma == pytest.approx(max(norms) - min(norms), rel=1e-12)


def test_p2p_with_decay_bounded_by_batch_range():
    rows = _ax_sine()
    feats = run(FeatureExtractor(), rows)
    norms = [f.norm_a for f in feats]
    assert all(0.0 <= f.p2p_norma <= max(norms) - min(norms) + 1e-12 for f in feats)
    assert feats[-1].p2p_norma > 0.2


@given(st.lists(st.tuples(*[finite] * 6), min_size=1, max_size=60))
def test_accumulators_non_negative(rows):
    for f in run(FeatureExtractor(), rows):
        assert f.mc_wx >= 0 and f.mc_wy >= 0
        assert f.p2p_norma >= 0 and f.p2p_wx >= 0


@given(st.lists(finite, min_size=1, max_size=60))
def test_p2p_no_decay_matches_batch(xs):
    cs = ChannelStats(gamma_p2p=1.0)
    for x in xs:
        cs.update(x)
    assert cs.p2p == pytest.approx(max(xs) - min(xs), rel=1e-12, abs=1e-12)


def test_deterministic_and_constant_state(rng):
    rows = rng.normal(size=(500, 6)).tolist()
    a = run(FeatureExtractor(), rows)
    b = run(FeatureExtractor(), rows)
    assert a == b
    fx = FeatureExtractor()
    size0 = fx.nbytes()
    run(fx, rows)
    assert fx.nbytes() == size0 == 4 * FeatureExtractor.state_scalars()


def test_zero_norm_reuses_previous_gravity():
    fx = FeatureExtractor()
    f0 = fx.extract(Sample(0, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)))
    assert (f0.g_x, f0.g_y, f0.g_z) == (0.0, 0.0, 1.0)
    f1 = fx.extract(Sample(1, (1.0, 0.0, 0.0), (0.0, 0.0, 0.0)))
    f2 = fx.extract(Sample(2, (0.0, 0.0, 0.0), (0.0, 0.0, 0.0)))
    assert (f2.g_x, f2.g_y, f2.g_z) == (f1.g_x, f1.g_y, f1.g_z)
    assert fx.degenerate_count == 2


def test_out_of_order_sample_rejected():
    fx = FeatureExtractor()
    fx.extract(Sample(0, (0, 0, 1), (0, 0, 0)))
    with pytest.raises(ValueError):
        fx.extract(Sample(5, (0, 0, 1), (0, 0, 0)))


def test_feature_order():
    assert FEATURE_NAMES == (
        "norm_a", "norm_w", "der_ax", "der_wy", "der_normw", "g_x", "g_y", "g_z",
        "mc_wx", "mc_wy", "p2p_norma", "p2p_wx",
    )
