import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homoclinic.basemap import Params
from homoclinic.entropy import (
    IDENTITY, SeparatedSetQuery, bowen_distance, cross_check, entropy_estimate, graph_bounds, greedy_separated,
    horseshoe_certificate, lowdisc_samples, make_graph, min_pairwise_bowen, orbit_points, separated_count,
    stratified_pairs, strip,
)
from homoclinic.perturbation import from_chart

P = Params()
pts = st.lists(st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)), min_size=2, max_size=40)


def test_bowen_distance_basics():
    p, q = (0.1, 0.2), (-0.3, 0.05)
    assert bowen_distance(p, q, 1, P) == pytest.approx(math.dist(p, q), abs=1e-15)
    assert bowen_distance(p, p, 30, P) == 0.0
    assert bowen_distance(p, q, 7, IDENTITY) == pytest.approx(math.dist(p, q))
    ds = [bowen_distance(p, q, n, P) for n in (1, 5, 20, 60)]
    assert ds == sorted(ds)


def test_bowen_distance_grows_along_corner_unstable_direction():
    d0 = 1e-7
    p, q = from_chart((0.5, 1e-6), 0), from_chart((0.5, 1e-6 + d0), 0)
    for n in (5, 20, 40):
        assert bowen_distance(p, q, n, P) == pytest.approx(d0 / 24 * 1.2 ** (n - 1), rel=1e-6)


@given(pts, st.floats(0.01, 0.5), st.integers(1, 5))
def test_greedy_set_is_separated(points, eps, n):
    q = SeparatedSetQuery(eps, n, points, P)
    orb = orbit_points(q.samples, n, P)
    kept = greedy_separated(orb, eps)
    if len(kept) > 1:
        assert min_pairwise_bowen(orb[kept]) >= eps
    assert separated_count(q, orb) == len(kept)
    # maximal: every rejected sample is within eps of a kept one
    for i in set(range(len(points))) - set(kept):
        assert min(np.max(np.linalg.norm(orb[i] - orb[k], axis=1)) for k in kept) < eps


@given(pts, st.floats(0.01, 0.5), st.integers(1, 30))
def test_identity_count_independent_of_n(points, eps, n):
    a = separated_count(SeparatedSetQuery(eps, 1, points, IDENTITY))
    assert separated_count(SeparatedSetQuery(eps, n, points, IDENTITY)) == a


def test_query_validation():
    with pytest.raises(ValueError):
        SeparatedSetQuery(0.0, 1, [(0, 0)], P)
    with pytest.raises(ValueError):
        SeparatedSetQuery(4.0, 1, [(0, 0)], P)
    with pytest.raises(ValueError):
        SeparatedSetQuery(0.1, 0, [(0, 0)], P)
    with pytest.raises(ValueError):
        SeparatedSetQuery(0.1, 1, [(1.5, 1.5)], P)


def test_lowdisc_samples_deterministic():
    a, b = lowdisc_samples(64, 3), lowdisc_samples(64, 3)
    assert np.array_equal(a, b) and not np.array_equal(a, lowdisc_samples(64, 4))
    assert np.all(np.abs(a) <= 0.5)


def test_identity_slope_zero():
    est = entropy_estimate(IDENTITY, [0.05, 0.1], [5, 10, 20], lowdisc_samples(128, 0))
    assert np.allclose(est.slopes, 0.0, atol=1e-12)


@given(st.lists(st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)), min_size=5, max_size=30),
       st.lists(st.floats(0.02, 0.6), min_size=2, max_size=4, unique=True))
def test_estimate_counts_monotone(points, eps_grid):
    est = entropy_estimate(P, eps_grid, [1, 3, 6], points)
    order = np.argsort(est.eps)
    c = est.counts[order]
    assert np.all(np.diff(c, axis=0) <= 0)  # nonincreasing in eps
    assert np.all(np.diff(c, axis=1) >= 0)  # nondecreasing in n
    assert np.all(c <= len(points))


def test_saturation_flag():
    samples = lowdisc_samples(16, 0)
    est = entropy_estimate(IDENTITY, [1e-4, 0.9], [1, 2], samples)
    assert est.saturated == [True, False]
    assert est.h_proxy == est.slopes[1]


def test_f0_slope_small():
    est = entropy_estimate(P, [0.05], [50, 100, 200], lowdisc_samples(256, 1))
    assert est.slopes[0] <= 0.02


def test_strips_and_graph_bounds(surrogate):
    lo, hi = strip(surrogate, 2, 1)
    assert lo == pytest.approx(1.25 + 0.75 * 0.0625 / 45) and hi - lo == pytest.approx(0.5 * 0.0625 / 45)
    with pytest.raises(ValueError):
        strip(surrogate, 2, 0)
    with pytest.raises(ValueError):
        strip(surrogate, 2, 45)
    assert graph_bounds(surrogate, 2) == (pytest.approx(1.2**-41 / 10), pytest.approx(50.0**-40))


def test_graph_membership(surrogate):
    sb, kb = graph_bounds(surrogate, 2)
    flat = make_graph(surrogate, 2, 7)
    assert flat.is_member() and len(flat.xs) >= 256 and flat.sup() == 0.0
    for seed in range(5):
        g = make_graph(surrogate, 2, 7, seed=seed)
        assert g.is_member() and g.sup() <= 0.5 * sb and g.max_slope() <= 0.5 * kb
    assert not make_graph(surrogate, 2, 7, slope=2 * kb).is_member()
    with pytest.raises(ValueError):
        make_graph(surrogate, 2, 7, points=100)


def test_stratified_pairs():
    pairs = stratified_pairs(45, 20, 0)
    assert pairs == stratified_pairs(45, 20, 0)
    assert all(1 <= j <= 44 and 1 <= k <= 44 for j, k in pairs)
    assert any(j == k for j, k in pairs) and len(pairs) >= 15


@pytest.fixture(scope="module")
def small_certificate(surrogate):
    return horseshoe_certificate(surrogate, pairs=[(5, 30), (30, 5), (17, 17)])


def test_cross_check_flat_and_random_graph(surrogate):
    a = cross_check(surrogate, 2, 5, 30)
    b = cross_check(surrogate, 2, 5, 30, curve=make_graph(surrogate, 2, 5, seed=3))
    sb, kb = graph_bounds(surrogate, 2)
    k_lo, k_hi = strip(surrogate, 2, 30)
    for r in (a, b):
        assert r.found and r.corner_to == 1
        assert r.witness_X[0] <= k_lo and r.witness_X[-1] >= k_hi
        assert np.all(np.diff(r.witness_X) > 0) and np.max(np.abs(r.witness_Y)) < sb
        assert np.max(np.abs(np.diff(r.witness_Y) / np.diff(r.witness_X))) < kb


def test_certificate_bound_and_separation(small_certificate):
    c = small_certificate
    assert c.passed and all(p["found"] for p in c.pairs)
    assert c.bound == math.log(44) / 40
    assert c.separation["passed"] and c.separation["min_distance"] >= 0.0625 / 90
    assert c.bound <= math.log(1.2)
    assert '"bound"' in c.to_json()


def test_certificate_withheld_without_wiggles(surrogate):
    c = horseshoe_certificate(surrogate.without_perturbation(), pairs=[(5, 30)])
    assert not c.passed and c.bound is None
    assert c.pairs[0]["reason"]
