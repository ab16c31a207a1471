import math

import numpy as np
import pytest

from homoclinic.analysis import iterate_tangent
from homoclinic.basemap import Params, tau
from homoclinic.entropy import strip
from homoclinic.itineraries import (
    HorseshoeSystem, chain, horseshoe_exponent, kicked_return_orbit, region_anchor,
)
from homoclinic.returns import first_arrival
from homoclinic.smooth import schedule_entry

LAM_LOG = math.log(1.2)


@pytest.fixture(scope="module")
def system(surrogate):
    return HorseshoeSystem(surrogate)


def test_chain_rotates_and_concatenates():
    a = iterate_tangent((0.1, -0.2), (1.0, 0.3), 10, Params())
    b = iterate_tangent((0.2, 0.1), (0.0, 1.0), 7, Params())
    c = chain([a, b], kicks=[0.5])
    assert c.steps == 17 and len(c.points) == 18
    assert np.allclose(c.points[11:], np.array([tau(1, p) for p in b.points[1:]]))
    assert c.log_growth[-1] == pytest.approx(a.log_growth[-1] + b.log_growth[-1] + 0.5)
    assert c.growth[10] == pytest.approx(b.growth[0] + 0.5)


def test_itinerary_pseudo_orbit(system, surrogate):
    it = [5, 30, 12]
    hs = system.pseudo_orbit(it)
    assert len(hs.leg_steps) == 2 and all(s == system.branch(j) for s, j in zip(hs.leg_steps, it))
    width = schedule_entry(surrogate.schedule, 2).ell / 45
    assert hs.max_jump <= 1e-4 * width
    starts = system.starts(it)
    for x, j in zip(starts, it):
        lo, hi = strip(surrogate, 2, j)
        assert lo <= x <= hi
    corners = hs.orbit.corner
    t1 = hs.leg_steps[0]
    assert corners[0] == 0 and corners[t1] == 1 and corners[-1] == 2


def test_fixed_point_returns_to_itself(system, surrogate):
    x = system.fixed_point(5)
    a = first_arrival(x, 0.0, surrogate.engine_config(), 0, budget=system.budget)
    assert a.steps == system.branch(5)
    assert abs(a.X - x) <= 1e-9


def test_horseshoe_exponent_report_consistent(system, surrogate):
    e = horseshoe_exponent(system.pseudo_orbit([5, 30, 12, 5]), 1.0, math.log(50))
    assert e.margin == pytest.approx(LAM_LOG - e.lam_hat)
    assert e.bound == pytest.approx(LAM_LOG - e.frequency)
    assert e.passed == (e.lam_hat < e.bound) and ("exponent bound" in e.violated) == (not e.passed)
    assert ("normal-block growth" in e.violated) == (not e.normal_blocks_pass)
    assert e.row()["itinerary"] == "5-30-12-5"


def test_region_anchor(surrogate, surrogate_gbar):
    e = schedule_entry(surrogate.schedule, 2)
    xg = region_anchor(surrogate, 2)
    assert e.a < xg < e.b and abs(math.sin(math.pi * e.N * (xg - e.a) / e.ell)) < 1e-9
    xb = region_anchor(surrogate_gbar, 2)
    assert e.a < xb < e.b and abs(math.cos(10 * math.pi * 16 * xb)) < 1e-9
    with pytest.raises(ValueError):
        region_anchor(surrogate.without_perturbation(), 2)


@pytest.mark.parametrize("variant", ["g", "gbar"])
def test_kicked_return_orbit(variant, surrogate, surrogate_gbar):
    cfg = surrogate if variant == "g" else surrogate_gbar
    k = kicked_return_orbit(cfg, 2, 40.0, returns=4)
    assert -40 * LAM_LOG <= k.log_Y <= -39 * LAM_LOG
    assert k.arrival_error <= 1e-9
    # the finite-time exponent differs from the period-matrix one by a fixed start-up term
    k8 = kicked_return_orbit(cfg, 2, 40.0, returns=8)
    assert k8.lam_periodic == k.lam_periodic
    assert 8 * (k8.lam_hat - k8.lam_periodic) == pytest.approx(4 * (k.lam_hat - k.lam_periodic), rel=1e-6)
    assert k.row()["rel_gap"] == pytest.approx(abs(k.lam_hat - LAM_LOG) / LAM_LOG)
