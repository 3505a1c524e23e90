import math
import random

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from imugate.errors import DegenerateTemplateError, EmptyWindowError
from imugate.template import (
    GRID,
    BinBounds,
    Template,
    bin_index,
    build,
    build_from_features,
    ncc,
    normalize_feature,
    similarity,
)

unit = st.floats(0.0, 1.0)
pairs_st = st.lists(st.tuples(unit, unit), min_size=1, max_size=200)


def pearson(a, b):
    # textbook two-pass Pearson correlation, independent of the implementation
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    ma, mb = math.fsum(a) / len(a), math.fsum(b) / len(b)
    num = math.fsum((x - ma) * (y - mb) for x, y in zip(a, b))
    den = math.sqrt(math.fsum((x - ma) ** 2 for x in a) * math.fsum((y - mb) ** 2 for y in b))
    return num / den


def test_normalize_feature():
    assert normalize_feature(2.0, 2.0, 6.0) == 0.0
    assert normalize_feature(6.0, 2.0, 6.0) == 1.0
    assert normalize_feature(9.0, 2.0, 6.0) == 1.0
    assert normalize_feature(-9.0, 2.0, 6.0) == 0.0
    assert normalize_feature(3.0, 3.0, 3.0) == 0.5


def test_bin_edges():
    assert bin_index(1.0) == 9
    assert bin_index(0.0) == 0
    assert bin_index(0.1) == 1
    assert bin_index(0.0999) == 0


def test_build_corner():
    t = build([(0.0, 0.0)] * 7)
    assert t.bins[0, 0] == 1.0 and t.bins.sum() == 1.0 and t.sample_count == 7


def test_build_uniform_centres():
    centres = [((i + 0.5) / GRID, (j + 0.5) / GRID) for i in range(GRID) for j in range(GRID)]
    t = build(centres)
    assert np.allclose(t.bins, 0.01)


def test_build_axes():
    # rows follow the second feature, columns the first
    t = build([(0.95, 0.05)])
    assert t.bins[0, 9] == 1.0


def test_build_empty():
    with pytest.raises(EmptyWindowError):
        build([])


def test_out_of_range_clamps_to_edge_bins():
    b = BinBounds(0.0, 1.0, 0.0, 1.0)
    t = build_from_features([5.0, -5.0], [0.5, 0.5], b)
    assert t.bins[5, 9] == 0.5 and t.bins[5, 0] == 0.5


def test_bounds_invariant():
    with pytest.raises(ValueError):
        BinBounds(1.0, 0.0, 0.0, 1.0)


@given(pairs_st)
def test_template_invariants(pairs):
    t = build(pairs)
    assert abs(t.bins.sum() - 1.0) <= 1e-9
    assert ((t.bins >= 0) & (t.bins <= 1)).all()


@given(pairs_st, st.randoms())
def test_build_permutation_invariant(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert np.array_equal(build(pairs).bins, build(shuffled).bins)


def test_ncc_self_is_one():
    t = build([(0.1, 0.2), (0.5, 0.5), (0.9, 0.3)])
    assert ncc(t, t) == pytest.approx(1.0, abs=1e-12)


def test_ncc_opposite_corners():
    a = build([(0.0, 0.0)])
    b = build([(1.0, 1.0)])
    expected = pearson(a.flat(), b.flat())
    assert expected == pytest.approx(-1.0 / 99.0, abs=1e-15)
    assert ncc(a, b) == pytest.approx(expected, abs=1e-12)


def test_ncc_uniform_is_degenerate():
    u = Template(np.full((GRID, GRID), 0.01), 100)
    t = build([(0.0, 0.0)])
    with pytest.raises(DegenerateTemplateError):
        ncc(t, u)
    assert similarity(u, u) == 1.0
    assert similarity(t, u) == 0.0


@given(pairs_st, pairs_st)
def test_ncc_matches_pearson_symmetric_bounded(p, q):
    a, b = build(p), build(q)
    try:
        r = ncc(a, b)
    except DegenerateTemplateError:
        return
    assert -1 - 1e-9 <= r <= 1 + 1e-9
    assert r == pytest.approx(ncc(b, a), abs=1e-12)
    assert r == pytest.approx(pearson(a.flat(), b.flat()), abs=1e-9)
    shifted_a = Template(a.bins + 0.37, a.sample_count)
    shifted_b = Template(b.bins + 0.37, b.sample_count)
    assert ncc(shifted_a, shifted_b) == pytest.approx(r, abs=1e-9)


def test_flat_round_trip():
    t = build([(0.1, 0.9), (0.4, 0.4)])
    flat = t.flat()
    assert len(flat) == 100 and flat[9 * GRID + 1] == 0.5
    assert np.array_equal(Template.from_flat(flat, 2).bins, t.bins)
