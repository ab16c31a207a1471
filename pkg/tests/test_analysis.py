import math

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st

from homoclinic.analysis import (
    AffineSegmentRecord, NoCornerVisit, block_decompose, check_block_growth, classify_special, delta_frequency,
    delta_mask, exponent_bound_check, in_delta, iterate_tangent, lyapunov, running_liminf, segment_orbit,
    special_threshold_log,
)
from homoclinic.basemap import Params, tau
from homoclinic.oracles import jacobian_product_log_growth, legal_tilings

P = Params()
square_pt = st.tuples(st.floats(-0.49, 0.49), st.floats(-0.49, 0.49))
tangent = st.tuples(st.floats(-1, 1), st.floats(-1, 1)).filter(lambda v: math.hypot(*v) > 1e-3)


def test_corner_fixed_point_exponents():
    up = lyapunov((-0.5, -0.5), (0.0, 1.0), 1000, P)
    along = lyapunov((-0.5, -0.5), (1.0, 0.0), 1000, P)
    assert up.mean == pytest.approx(math.log(1.2), rel=1e-12)
    assert along.mean == pytest.approx(-math.log(50), rel=1e-12)
    assert up.liminf == pytest.approx(up.mean, rel=1e-12)


def test_lyapunov_rejects_short_horizon():
    with pytest.raises(ValueError):
        lyapunov((0.1, 0.1), (1, 0), 999, P)


def test_iterate_tangent_domain():
    with pytest.raises(ValueError):
        iterate_tangent((0.1, 0.1), (0, 0), 10, P)
    with pytest.raises(ValueError):
        iterate_tangent((1.9, 1.9), (1, 0), 10, P)
    with pytest.raises(ValueError):
        iterate_tangent((0.1, 0.1), (1, 0), 0, P)


@pytest.mark.parametrize("steps", [20, 30])
@pytest.mark.parametrize("seed", range(8))
def test_cocycle_matches_direct_jacobian_product(seed, steps):
    rng = np.random.default_rng(seed)
    p = rng.uniform(-0.49, 0.49, 2)
    v = rng.normal(size=2)
    orbit = iterate_tangent(p, v, steps, P)
    direct = jacobian_product_log_growth(p, v, steps, P)
    assert abs(orbit.log_growth[-1] - direct) <= 1e-8 * max(1.0, abs(direct))


@given(square_pt, tangent, st.floats(1e-6, 1e6))
def test_growth_is_scale_invariant(p, v, c):
    a = iterate_tangent(p, v, 200, P).log_growth[-1]
    b = iterate_tangent(p, (c * v[0], c * v[1]), 200, P).log_growth[-1]
    assert a == pytest.approx(b, abs=1e-9 * max(1.0, abs(a)))


def test_running_liminf_is_window_minimum():
    lg = np.concatenate([[0.0], np.cumsum(np.r_[np.ones(50), -np.ones(50)])])
    assert running_liminf(lg) == pytest.approx(0.0)
    assert running_liminf(np.arange(101.0)) == pytest.approx(1.0)


@given(st.floats(-1.9, 1.9), st.floats(-1.9, 1.9))
def test_delta_mask_matches_pointwise(x, y):
    assert bool(delta_mask(np.array([[x, y]]))[0]) == in_delta((x, y))


def test_delta_examples():
    p = (0.41, -0.3)
    assert in_delta(p) and not in_delta((0.4, -0.3)) and not in_delta((0.41, -0.05))
    for i in range(4):
        assert in_delta(tau(i, p))


@given(square_pt, tangent)
def test_delta_frequency_is_a_frequency(p, v):
    fr = delta_frequency(iterate_tangent(p, v, 300, P))
    assert 0.0 <= fr.liminf <= 1.0 and 0.0 <= fr.frequency <= 1.0
    assert fr.visits == round(fr.frequency * 300)


def _records(p, v, steps=3000):
    orbit = iterate_tangent(p, v, steps, P)
    try:
        return orbit, segment_orbit(orbit)
    except NoCornerVisit:
        return orbit, None


@given(square_pt, tangent)
def test_segments_partition_the_orbit(p, v):
    orbit, seg = _records(p, v)
    assume(seg is not None and seg.records)
    recs = seg.records
    assert recs[0].t_prev == seg.anchor
    for a, b in zip(recs, recs[1:]):
        assert a.t == b.t_prev
    inside = orbit.corner >= 0
    for r in recs:
        assert r.t_prev <= r.s < r.t
        assert inside[r.t_prev:r.s + 1].all()
        assert not inside[r.s + 1:r.t].any()
        assert r.tau == r.tau_prime + r.d


@given(square_pt, tangent)
def test_special_flags_deterministic(p, v):
    _, seg = _records(p, v, 1500)
    assume(seg is not None)
    a = [r.special for r in classify_special(seg.records, 1.0)]
    _, seg2 = _records(p, v, 1500)
    assert a == [r.special for r in classify_special(seg2.records, 1.0)]


def _rec(theta_log, t_prev, t):
    return AffineSegmentRecord(t_prev, t_prev, t, 0, theta_log, 0.0, 0.0, 0.0, 0.0, -1.0, -1)


def test_classify_special_threshold():
    assert special_threshold_log(10, 1.0) == 0.0
    assert special_threshold_log(10, 2.0) == pytest.approx(-5 * math.log(1.2))
    recs = classify_special([_rec(0.1, 0, 5), _rec(-0.1, 5, 9), _rec(math.inf, 9, 20), _rec(5.0, 20, 30)], 1.0)
    assert [r.special for r in recs] == [True, False, True, False]
    recs = classify_special([_rec(-0.8, 0, 5), _rec(-1.0, 5, 15), _rec(0.0, 15, 25)], 2.0)
    assert [r.special for r in recs] == [True, False, False]  # threshold -5 log 1.2 = -0.91


def _as_oracle(decomp):
    return decomp.residual, [(b.kind, b.j_start, b.j_end) for b in decomp.blocks]


@given(st.lists(st.booleans(), min_size=1, max_size=14), st.data())
def test_block_decompose_matches_brute_force(special, data):
    n = data.draw(st.integers(0, len(special)))
    n1 = data.draw(st.integers(0, n))
    tilings = legal_tilings(special, n1, n)
    assert tilings == [_as_oracle(block_decompose(special, n1, n))]


def test_block_decompose_synthetic_cases():
    rng = np.random.default_rng(7)
    for _ in range(200):
        m = int(rng.integers(1, 16))
        special = list(rng.random(m) < rng.uniform(0, 1))
        n = int(rng.integers(0, m + 1))
        n1 = int(rng.integers(0, n + 1))
        assert legal_tilings(special, n1, n) == [_as_oracle(block_decompose(special, n1, n))]


def test_block_decompose_examples():
    d = block_decompose([False, True, False, False], 0, 4)
    assert _as_oracle(d) == (0, [("special", 0, 2), ("normal", 2, 3), ("normal", 3, 4)])
    d = block_decompose([True, True, False], 0, 2)
    assert _as_oracle(d) == (0, [("special", 0, 2)])
    # t_1 special but only one slot left: no block fits
    assert _as_oracle(block_decompose([True, True, False], 1, 2)) == (2, [])
    with pytest.raises(ValueError):
        block_decompose([False], 0, 2)


def test_block_residual_cannot_host_a_block():
    rng = np.random.default_rng(3)
    for _ in range(200):
        special = list(rng.random(12) < 0.4)
        d = block_decompose(special, 2, 12)
        j = d.residual
        assert not (j - 1 >= 2 and not special[j - 1])
        assert not (j - 2 >= 2 and special[j - 1])
        covered = [k for b in d.blocks for k in range(b.j_start, b.j_end)]
        assert covered == list(range(j, 12))


@pytest.mark.parametrize("seed", range(6))
def test_f0_orbits_have_only_normal_blocks_that_grow_slowly(seed):
    rng = np.random.default_rng(seed)
    p, v = rng.uniform(-0.49, 0.49, 2), rng.normal(size=2)
    orbit, seg = _records(p, v, 5000)
    recs = classify_special(seg.records, 1.0)
    # flag j belongs to t_j; the first segment only aligns the arbitrary start vector
    d = block_decompose([False] + [r.special for r in recs], 1, len(recs))
    rep = check_block_growth(recs, d, 1.0, math.log(50))
    assert all(b.block.kind == "normal" for b in rep.blocks)
    assert rep.normal_pass and rep.aggregate_pass


def test_exponent_bound_requires_open_square():
    with pytest.raises(ValueError):
        exponent_bound_check((0.5, 0.0), (1, 0), 1000, 1.0, P, 1.0)


def test_exponent_bound_report_consistent():
    rep = exponent_bound_check((0.1, -0.2), (0.3, 0.7), 2000, 1.0, P, 1.0)
    assert rep.bound == pytest.approx(math.log(1.2) - rep.frequency)
    assert rep.passed == (rep.lam_hat < rep.bound)
    assert rep.delta_free == (rep.frequency == 0.0)
