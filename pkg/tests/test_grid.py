import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpspatial.grid import (
    BinGrid,
    SiteSet,
    bin_index,
    bin_indices,
    polygon_index,
    polygon_indices,
    polygon_weights,
    set_distance,
    sup_distance,
)

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)
widths = st.floats(min_value=1e-6, max_value=1e3, allow_nan=False)
sites2 = st.tuples(st.integers(-50, 50), st.integers(-50, 50))


def exact_floor(x: float, b: float, shift: Fraction = Fraction(0)) -> int:
    return math.floor(Fraction(x) / Fraction(b) + shift)


# -- sup_distance / set_distance -------------------------------------------------


@pytest.mark.parametrize("i,j,expected", [((0, 0), (0, 0), 0), ((1, -2), (3, 1), 3), ((5,), (2,), 3)])
def test_sup_distance_examples(i, j, expected):
    assert sup_distance(i, j) == expected


def test_sup_distance_rejects_mixed_dimensions():
    with pytest.raises(ValueError):
        sup_distance((0, 0), (0,))


@given(sites2, sites2, sites2)
def test_sup_distance_is_a_metric(a, b, c):
    assert sup_distance(a, b) == sup_distance(b, a)
    assert sup_distance(a, c) <= sup_distance(a, b) + sup_distance(b, c)
    assert (sup_distance(a, b) == 0) == (a == b)


def test_set_distance_examples():
    assert set_distance(SiteSet([(0, 0)]), SiteSet([(0, 0)])) == 0
    assert set_distance(SiteSet([(0, 0)]), SiteSet([(3, 1), (-4, 0)])) == 3
    assert set_distance(SiteSet([(0,)]), SiteSet([(7,)])) == 7


@given(st.lists(sites2, min_size=1, max_size=8, unique=True), st.lists(sites2, min_size=1, max_size=8, unique=True))
def test_set_distance_matches_pairwise_minimum(a, b):
    assert set_distance(a, b) == min(sup_distance(i, j) for i in a for j in b)


def test_set_distance_rejects_empty():
    with pytest.raises(ValueError):
        set_distance([], SiteSet([(0,)]))


# -- index maps ---------------------------------------------------------------------


@pytest.mark.parametrize("x,k", [(0.0, 1), (-0.05, 0), (0.25, 3)])
def test_bin_index_examples(x, k):
    assert bin_index(x, BinGrid(0.1)) == k


@pytest.mark.parametrize("x,k", [(0.05, 1), (0.0, 0), (0.149999, 1)])
def test_polygon_index_examples(x, k):
    assert polygon_index(x, BinGrid(0.1)) == k


@pytest.mark.parametrize("x,k,a", [(0.05, 1, 1.0), (0.1, 1, 0.5), (0.12, 1, 0.3)])
def test_polygon_weight_examples(x, k, a):
    w = polygon_weights(x, BinGrid(0.1))
    assert w.k == k
    assert w.a == pytest.approx(a, abs=1e-12)
    assert w.a_bar == pytest.approx(1 - a, abs=1e-12)


@settings(max_examples=500)
@given(finite, widths)
def test_indices_agree_with_exact_floor_formulas(x, b):
    g = BinGrid(b)
    assert bin_index(x, g) == exact_floor(x, b) + 1
    assert polygon_index(x, g) == exact_floor(x, b, Fraction(1, 2))


def test_partition_law_on_random_and_boundary_points():
    """10^5 random (x, b) pairs, including exact multiples of b and b/2, checked in rationals."""
    rng = np.random.default_rng(11)
    half = Fraction(1, 2)
    for bv in rng.uniform(1e-3, 10.0, 100).tolist():
        g = BinGrid(bv)
        k = rng.integers(-1000, 1000, 250).astype(float)
        x = np.concatenate([rng.uniform(-1e4, 1e4, 250), k * bv, (k - 0.5) * bv, (k + 0.5) * bv])
        s_idx = bin_indices(x, g).tolist()
        j_idx = polygon_indices(x, g).tolist()
        fb = Fraction(bv)
        for xv, s, j in zip(x.tolist(), s_idx, j_idx):
            q = Fraction(xv) / fb
            assert s - 1 <= q < s
            assert j - half <= q < j + half


@given(st.floats(-1e3, 1e3), st.integers(-20, 0), st.integers(-1000, 1000))
def test_bin_index_shift_covariance(x, e, m):
    g = BinGrid(2.0**e)
    y = x + m * g.bin_width
    if y - m * g.bin_width == x:  # the shift is exact in floating point
        assert bin_index(y, g) == bin_index(x, g) + m


@given(finite, widths)
def test_weights_sum_to_one(x, b):
    w = polygon_weights(x, BinGrid(b))
    assert abs(w.a + w.a_bar - 1.0) <= np.spacing(1.0)
    assert 0.0 <= w.a_bar <= 1.0 and 0.0 < w.a <= 1.0


def test_non_finite_input_rejected():
    with pytest.raises(ValueError):
        bin_index(float("nan"), BinGrid(0.1))
    with pytest.raises(ValueError):
        BinGrid(0.0)


# -- SiteSet ------------------------------------------------------------------------


def test_siteset_rejects_duplicates_and_empty():
    with pytest.raises(ValueError):
        SiteSet([(0, 0), (0, 0)])
    with pytest.raises(ValueError):
        SiteSet(np.zeros((0, 2)))


def test_siteset_constructors():
    r = SiteSet.rectangle([3, 4], origin=[1, -1])
    assert len(r) == 12 and r.is_rectangle()
    assert r.bounding_box()[0].tolist() == [1, -1]
    b = SiteSet.ball([0, 0, 0], 1)
    assert len(b) == 27
    c = SiteSet.random_connected(2, 200, seed=3)
    assert len(c) == 200
    assert c == SiteSet.random_connected(2, 200, seed=3)
    # nearest-neighbour connectivity
    sites = {tuple(s) for s in c}
    seen, stack = {next(iter(sites))}, [next(iter(sites))]
    while stack:
        s = stack.pop()
        for ax in range(2):
            for step in (-1, 1):
                nb = list(s)
                nb[ax] += step
                nb = tuple(nb)
                if nb in sites and nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    assert seen == sites


def test_siteset_json_round_trip_and_arbitrary_shape():
    s = SiteSet([(0, 0), (5, 2), (-3, 7)])
    assert not s.is_rectangle()
    assert SiteSet.from_json(s.to_json()) == s


def test_dilate():
    s = SiteSet([(0,), (10,)], d=1)
    assert len(s.dilate(2)) == 10
    assert set_distance(s.dilate(2), SiteSet([(5,)], d=1)) == 3
