"""Corner-to-corner return map of the perturbed map in corner-chart units.

A start point ``(X, Y)`` in corner ``i`` is iterated until its first arrival
in corner ``i + 1``; the arrival is reported in that corner's chart, so the
map is ``tau_{i+1}^{-1} o f^P o tau_i`` with ``P`` the arrival time. Heights
are carried as logarithms because arrivals sit ``e^-190`` above the edge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine as eng
from .analysis import orbit_from_state
from .basemap import as_engine_config

LOG_SCALE = math.log(eng.SCALE)


@dataclass
class Arrival:
    steps: int  # -1 if the budget ran out
    X: float
    log_Y: float
    log_growth: float  # log |Df^P v| for the unit start vector
    direction: tuple[float, float]  # unit tangent at arrival, arrival chart frame
    corner: int

    @property
    def Y(self) -> float:
        return math.exp(self.log_Y)

    @property
    def found(self) -> bool:
        return self.steps > 0


def start_state(X: float, Y: float, corner: int = 0, v=(1.0, 0.0)):
    """Engine state at chart point (X, Y) of a corner, tangent v in chart frame."""
    va, vb = float(v[0]), float(v[1])
    if X <= 0.0:
        raise ValueError("X must be positive")
    if Y >= 0.0:
        lb = math.log(Y) - LOG_SCALE if Y > 0.0 else -math.inf
        return eng.corner_state(corner, math.log(X) - LOG_SCALE, lb, va, vb)
    # below the edge: global coordinates
    x, y = eng._rot(corner, X / eng.SCALE - 0.5, Y / eng.SCALE - 0.5)
    vx, vy = eng._rot(corner, va, vb)
    return eng.init_state(x, y, vx, vy)


def first_arrival(X: float, Y: float, map_cfg, corner: int = 0, v=(1.0, 0.0),
                  budget: int = 20000) -> Arrival:
    cfg = as_engine_config(map_cfg)
    st, tv = start_state(X, Y, corner, v)
    target = (corner + 1) % 4
    k, g = eng.run_until_corner(st, tv, cfg, target, budget)
    if k < 0:
        return Arrival(-1, math.nan, math.nan, g, (math.nan, math.nan), -1)
    c, la, lb, _ = eng.corner_view(st, tv)
    _, va, vb = eng.corner_tangent(st, tv)
    return Arrival(k, eng.SCALE * math.exp(la), lb + LOG_SCALE, g, (va, vb), c)


def return_jacobian(X: float, Y: float, map_cfg, corner: int = 0, budget: int = 20000):
    """(arrival, 2x2 chart-frame derivative of the return map)."""
    a1 = first_arrival(X, Y, map_cfg, corner, (1.0, 0.0), budget)
    a2 = first_arrival(X, Y, map_cfg, corner, (0.0, 1.0), budget)
    if not (a1.found and a2.found) or a1.steps != a2.steps:
        raise RuntimeError("return map undefined at this point")
    c1 = np.array(a1.direction) * math.exp(a1.log_growth)
    c2 = np.array(a2.direction) * math.exp(a2.log_growth)
    return a1, np.column_stack([c1, c2])


def dX_arrival(X: float, Y: float, map_cfg, corner: int = 0, budget: int = 20000):
    """Arrival and d X'/d X along the horizontal start direction."""
    a = first_arrival(X, Y, map_cfg, corner, (1.0, 0.0), budget)
    if not a.found:
        return a, math.nan
    return a, a.direction[0] * math.exp(a.log_growth)


def solve_arrival(X_lo: float, X_hi: float, target: float | None, map_cfg, Y: float = 0.0,
                  corner: int = 0, tol: float = 1e-13, max_iter: int = 60):
    """X in [X_lo, X_hi] whose arrival abscissa equals ``target``.

    ``target=None`` asks for a fixed point of the return abscissa instead.
    The bracket must have the residual change sign on one branch (same
    arrival time). Safeguarded Newton using the tangent derivative.
    """
    def resid(x, a, dx):
        if target is None:
            return a.X - x, dx - 1.0
        return a.X - target, dx

    a_lo, d_lo = dX_arrival(X_lo, Y, map_cfg, corner)
    a_hi, d_hi = dX_arrival(X_hi, Y, map_cfg, corner)
    f_lo, f_hi = resid(X_lo, a_lo, d_lo)[0], resid(X_hi, a_hi, d_hi)[0]
    scale = 1.0 if target is None else max(1.0, abs(target))
    if a_lo.steps != a_hi.steps or f_lo * f_hi > 0:
        raise ValueError("bracket does not straddle the target on one branch")
    lo, hi = X_lo, X_hi
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        a, dx = dX_arrival(x, Y, map_cfg, corner)
        f, df = resid(x, a, dx)
        if a.steps != a_lo.steps:
            # left the branch: retreat toward the low end of the bracket
            x = 0.5 * (lo + x)
            continue
        if (f < 0) == (f_lo < 0):
            lo, f_lo = x, f
        else:
            hi = x
        if abs(f) <= tol * scale or hi - lo <= 4e-16 * abs(x):
            return x, a
        step = f / df if df and math.isfinite(df) else math.inf
        nxt = x - step
        x = nxt if lo < nxt < hi else 0.5 * (lo + hi)
    return x, dX_arrival(x, Y, map_cfg, corner)[0]


def return_leg(X: float, Y: float, map_cfg, corner: int = 0, v=(1.0, 0.0), budget: int = 20000):
    """The recorded orbit from a corner chart point up to its first arrival in the next corner.

    Returns (TangentOrbit, Arrival); the orbit is None when the budget runs out.
    """
    cfg = as_engine_config(map_cfg)
    arr = first_arrival(X, Y, cfg, corner, v, budget)
    if not arr.found:
        return None, arr
    st, tv = start_state(X, Y, corner, v)
    return orbit_from_state(st, tv, arr.steps, cfg), arr
