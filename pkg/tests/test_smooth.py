import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homoclinic.smooth import (
    LAMBDA, PerturbationSchedule, bump, dpsi, flat_cutoff, log_flat_cutoff_ratio, plateau_cutoff,
    schedule_entry, wiggle_count,
)

finite = st.floats(-1e6, 1e6, allow_nan=False)


def mp_bump(t):
    """Independent high-precision mollifier quotient theta(1-t)/(theta(1-t)+theta(t))."""
    t = mpmath.mpf(t)
    theta = lambda s: mpmath.exp(-1 / s) if s > 0 else mpmath.mpf(0)  # noqa: E731
    return theta(1 - t) / (theta(1 - t) + theta(t))


# bump ---------------------------------------------------------------------

def test_bump_plateaus():
    assert bump(-3) == 1.0
    assert bump(2) == 0.0
    assert bump(0.0) == 1.0 and bump(1.0) == 0.0


def test_bump_midpoint_regression():
    # theta(1/2) / (2 theta(1/2))
    assert bump(0.5) == 0.5


@pytest.mark.parametrize("t", [1e-3, 0.1, 0.25, 0.5, 0.7, 0.9, 0.999])
def test_bump_matches_high_precision_quotient(t):
    with mpmath.workdps(40):
        assert bump(t) == pytest.approx(float(mp_bump(t)), rel=1e-13, abs=1e-300)


@given(finite)
def test_bump_range(t):
    v = bump(t)
    assert 0.0 <= v <= 1.0
    if 0.0 < t < 1.0 and 1e-3 < t < 1 - 1e-3:
        assert 0.0 < v < 1.0


@given(finite, finite)
def test_bump_nonincreasing(s, t):
    lo, hi = min(s, t), max(s, t)
    assert bump(lo) >= bump(hi)


def test_bump_vectorized_agrees():
    t = np.linspace(-0.5, 1.5, 2001)
    vec, scalar = bump(t), np.array([bump(float(x)) for x in t])
    # numpy and libm exp may differ in the last place
    assert np.all(np.abs(vec - scalar) <= 4 * np.spacing(np.maximum(vec, scalar)))
    assert np.array_equal(vec[(t <= 0) | (t >= 1)], scalar[(t <= 0) | (t >= 1)])


def test_bump_flat_at_both_ends():
    # symmetric differences up to order 4 stay bounded and vanish at the plateau edges
    h = 1e-2
    for t0 in (0.0, 1.0):
        for k in range(1, 5):
            coeff = [(-1) ** j * math.comb(k, j) for j in range(k + 1)]
            d = sum(c * bump(t0 + (k / 2 - j) * h) for j, c in enumerate(coeff)) / h**k
            assert abs(d) < 1e-10
    grid = np.linspace(0.01, 0.99, 99)
    assert np.all(np.isfinite([dpsi(x) for x in grid]))
    assert max(abs(dpsi(x)) for x in grid) < 10


# flat cutoff --------------------------------------------------------------

def test_flat_cutoff_plateaus():
    assert flat_cutoff(-1, 2) == 0.0
    assert flat_cutoff(5, 2) == 1.0


def test_flat_cutoff_rejects_r_below_one():
    with pytest.raises(ValueError):
        flat_cutoff(0.5, 0.5)


@given(finite, finite)
def test_flat_cutoff_nondecreasing(s, t):
    lo, hi = min(s, t), max(s, t)
    assert flat_cutoff(lo) <= flat_cutoff(hi)


def _mp_ratio(t, r):
    with mpmath.workdps(60):
        alpha = lambda s: mp_bump(1 - s)  # noqa: E731
        d = mpmath.diff(alpha, mpmath.mpf(t))
        return float(mpmath.log(abs(d)) - (1 - mpmath.mpf(1) / r) * mpmath.log(alpha(mpmath.mpf(t))))


def test_flat_cutoff_ratio_decreases_to_zero_r2():
    logs = [log_flat_cutoff_ratio(t, 2.0) for t in (1e-2, 1e-3, 1e-4)]
    for t, lg in zip((1e-2, 1e-3, 1e-4), logs):
        assert lg == pytest.approx(_mp_ratio(t, 2.0), rel=1e-9)
    assert logs[0] > logs[1] > logs[2]
    assert logs[2] < -1000  # ratio far below any double


@pytest.mark.parametrize("r", [1, 1.5, 2, 3, 5])
def test_flat_cutoff_little_o_property(r):
    ts = np.logspace(-6, math.log10(0.5), 200)
    logs = np.array([log_flat_cutoff_ratio(float(t), r) for t in ts])
    assert np.all(np.isfinite(logs))
    assert logs.max() < 10  # finite sup
    assert logs[0] < -1e4  # tends to 0 at 0+


# plateau cutoff -----------------------------------------------------------

def test_plateau_cutoff_values():
    assert plateau_cutoff(0.3) == 1.0
    assert plateau_cutoff(-1.5) == 0.0
    v = plateau_cutoff(0.75)
    assert 0.0 < v < 1.0
    assert v == plateau_cutoff(-0.75)
    assert v == pytest.approx(float(mp_bump(0.5)), rel=1e-15)


@given(st.floats(-5, 5, allow_nan=False), st.floats(-5, 5, allow_nan=False))
def test_plateau_cutoff_even_and_monotone(s, t):
    assert plateau_cutoff(s) == plateau_cutoff(-s)
    a, b = sorted((abs(s), abs(t)))
    assert plateau_cutoff(a) >= plateau_cutoff(b)


@given(st.floats(-0.5, 0.5))
def test_plateau_exact_on_core(t):
    assert plateau_cutoff(t) == 1.0


# schedule -----------------------------------------------------------------

def test_schedule_entry_n2_geometry():
    e = schedule_entry(PerturbationSchedule(n0=2, r=1, T={2: 40}), 2)
    assert e.a == 1.25 and e.ell == 0.0625 and e.b == 1.3125


def test_wiggle_count_surrogate():
    # independent: 1.2**40 / 32 with exact rationals
    from fractions import Fraction
    exact = Fraction(6, 5) ** 40 / 32
    assert int(exact) == 45
    assert wiggle_count(40, 1, 2) == 45
    assert schedule_entry(PerturbationSchedule(n0=2, r=1, T={2: 40}), 2).N == 45


def test_schedule_rejects_single_strip():
    assert wiggle_count(40, 2, 2) == 1
    with pytest.raises(ValueError, match="N_2"):
        PerturbationSchedule(n0=2, r=2, T={2: 40})


@pytest.mark.parametrize("bad", [
    dict(n0=1, r=1, T={1: 40}),
    dict(n0=2, r=0.5, T={2: 40}),
    dict(n0=2, r=1, T={2: 40, 3: 40}),
    dict(n0=2, r=1, T={2: 40, 4: 80}),
    dict(n0=2, r=1, T={2: 4000}),
])
def test_schedule_validation(bad):
    with pytest.raises(ValueError):
        PerturbationSchedule(**bad)


def test_schedule_entry_rejects_unscheduled():
    s = PerturbationSchedule(n0=2, r=1, T={2: 40})
    with pytest.raises(ValueError):
        schedule_entry(s, 1)
    with pytest.raises(ValueError):
        schedule_entry(s, 3)


@given(st.integers(2, 6), st.integers(0, 4), st.sampled_from([1.0, 1.5, 2.0]))
def test_linear_schedule_invariants(n0, extra, r):
    s = PerturbationSchedule.linear(n0, r, n0 + extra)
    prev = None
    for n in range(n0, n0 + extra + 1):
        e = schedule_entry(s, n)
        assert e.a == 1 + 1 / n**2 and e.ell == 1 / n**4 and e.b == e.a + e.ell
        assert e.N == wiggle_count(e.T, r, n) >= 2
        with mpmath.workdps(50):
            assert e.N == int(mpmath.floor((mpmath.mpf(6) / 5) ** (mpmath.mpf(e.T) / r) / n**5))
        if prev is not None:
            assert e.b < prev.a and e.T > prev.T  # disjoint rectangles, increasing T
        prev = e
    assert s.lam == LAMBDA == 6 / 5


def test_schedule_entry_is_pure():
    s1 = PerturbationSchedule(n0=2, r=1, T={2: 40, 3: 60})
    s2 = PerturbationSchedule(n0=2, r=1, T={2: 40, 3: 60})
    assert schedule_entry(s1, 3) == schedule_entry(s2, 3)
