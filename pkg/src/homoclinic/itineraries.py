"""Horseshoe orbits built from chained corner-to-corner returns.

Return orbits expand by ~1e4 per passage, so a double-precision orbit only
follows a prescribed itinerary for two or three returns. Long horseshoe
orbits are therefore assembled leg by leg: every leg starts afresh on the
flat graph over its strip, at the abscissa that sends it to the next leg's
start. The result is a pseudo-orbit whose junction jumps are recorded; by
the four-fold symmetry every leg is computed from corner 0 and rotated
into place.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import engine as eng
from .analysis import (
    TangentOrbit, block_decompose, check_block_growth, classify_special, delta_frequency,
    segment_orbit,
)
from .basemap import LAM_LOG, ROT
from .entropy import _StripScan, make_graph, strip
from .perturbation import VARIANTS as VARIANT_CODES, PerturbedMapConfig, from_chart
from .returns import first_arrival, return_jacobian, return_leg
from .smooth import schedule_entry


@dataclass
class HorseshoeOrbit:
    itinerary: list[int]
    orbit: TangentOrbit
    leg_steps: list[int]
    max_jump: float  # largest |arrival X - next start X| in chart units


def _rotate(orbit: TangentOrbit, i: int) -> TangentOrbit:
    R = ROT[i % 4]
    corner = np.where(orbit.corner >= 0, (orbit.corner + i) % 4, orbit.corner)
    return TangentOrbit(orbit.points @ R.T, orbit.directions @ R.T, orbit.growth, orbit.log_growth,
                        corner, orbit.log_a, orbit.log_b, orbit.log_theta, orbit.region)


def chain(legs: list[TangentOrbit], kicks=None) -> TangentOrbit:
    """Concatenate legs; leg i is rotated into corner i and its start point dropped after the first.

    ``kicks[i]`` is extra log-growth charged to the first step of leg i + 1.
    """
    parts = [_rotate(leg, i) for i, leg in enumerate(legs)]

    def cat(name, skip_first=True):
        arrs = [getattr(parts[0], name)] + [getattr(p, name)[1:] if skip_first else getattr(p, name)
                                             for p in parts[1:]]
        return np.concatenate(arrs)

    growth = np.concatenate([p.growth for p in parts])
    if kicks is not None:
        starts = np.cumsum([p.steps for p in parts])[:-1]
        growth[starts] += np.asarray(kicks, dtype=float)
    log_growth = np.concatenate([[0.0], np.cumsum(growth)])
    return TangentOrbit(cat("points"), cat("directions"), growth, log_growth, cat("corner"),
                        cat("log_a"), cat("log_b"), cat("log_theta"), cat("region"))


class HorseshoeSystem:
    """Strip scans for one scheduled region, with one return branch per strip.

    Each strip uses the first arrival time whose image runs across every
    strip, matching the single sub-arc per symbol of the certified crossings.
    """

    def __init__(self, cfg: PerturbedMapConfig, n: int | None = None, coarse: int = 64,
                 ftol_rel: float = 1e-6):
        self.cfg = cfg
        self.n = cfg.schedule.n0 if n is None else n
        self.entry = schedule_entry(cfg.schedule, self.n)
        self.coarse = coarse
        self.budget = 20 * (self.entry.T + 200)
        self.ftol = ftol_rel * self.entry.ell / self.entry.N
        self._scans: dict[int, _StripScan] = {}
        self._branch: dict[int, int] = {}
        self.span = (strip(cfg, self.n, 1)[0], strip(cfg, self.n, self.entry.N - 1)[1])

    @property
    def symbols(self) -> range:
        return range(1, self.entry.N)

    def scan(self, j: int) -> _StripScan:
        if j not in self._scans:
            sc = _StripScan(self.cfg, make_graph(self.cfg, self.n, j), 0, self.coarse, self.budget)
            self._scans[j] = sc
            self._branch[j] = sc.spanning_branch(*self.span)
        return self._scans[j]

    def branch(self, j: int) -> int:
        self.scan(j)
        return self._branch[j]

    def land(self, j: int, target: float) -> float:
        """Start abscissa in I_j, on the chosen branch, arriving at ``target``."""
        sc = self.scan(j)
        for i in sc.brackets(target):
            if sc.steps[i] == self._branch[j]:
                return sc.solve_loose(i, target, self.ftol)[0]
        raise RuntimeError(f"no return from I_{j} to {target}")

    def fixed_point(self, j: int) -> float:
        """Abscissa in I_j whose return on the chosen branch comes back to itself."""
        sc = self.scan(j)
        d = sc.Xp - sc.X
        for i in range(len(sc.X) - 1):
            if sc.steps[i] == sc.steps[i + 1] == self._branch[j] and d[i] * d[i + 1] <= 0:
                return brentq(lambda s: sc.arrive(s).X - s, sc.X[i], sc.X[i + 1],
                              xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)
        raise RuntimeError(f"no fixed point of the return over I_{j}")

    def starts(self, itinerary) -> list[float]:
        """Leg start abscissas realizing the itinerary (solved from the last symbol backwards)."""
        its = list(itinerary)
        xs = [0.5 * sum(strip(self.cfg, self.n, its[-1]))]
        for j in reversed(its[:-1]):
            xs.append(self.land(j, xs[-1]))
        return xs[::-1]

    def pseudo_orbit(self, itinerary, v=(1.0, 0.0), starts=None) -> HorseshoeOrbit:
        """Chain one return leg per symbol except the last, which only fixes the final target."""
        xs = self.starts(itinerary) if starts is None else list(starts)
        legs, steps, jump = [], [], 0.0
        ecfg = self.cfg.engine_config()
        va, vb = v
        for k in range(len(xs) - 1):
            leg, arr = return_leg(xs[k], 0.0, ecfg, 0, (va, vb), self.budget)
            if leg is None:
                raise RuntimeError(f"leg {k} did not arrive")
            legs.append(leg)
            steps.append(arr.steps)
            jump = max(jump, abs(arr.X - xs[k + 1]))
            va, vb = arr.direction
        return HorseshoeOrbit(list(itinerary), chain(legs), steps, jump)

    def periodic_orbit(self, j: int, returns: int = 8, v=(1.0, 0.0)) -> HorseshoeOrbit:
        x = self.fixed_point(j)
        return self.pseudo_orbit([j] * (returns + 1), v, starts=[x] * (returns + 1))

    def random_itinerary(self, length: int, rng: np.random.Generator) -> list[int]:
        return [int(s) for s in rng.integers(1, self.entry.N, size=length)]


@dataclass
class HorseshoePoints:
    points: np.ndarray  # global coordinates
    itineraries: np.ndarray  # rows (j1, j2, j3)
    arrival_steps: np.ndarray
    n: int


def _land_row(job):
    """Start abscissas in I_j1 for a list of landing targets (one unit of parallel work)."""
    cfg, n, coarse, ftol_rel, j1, targets = job
    hs = HorseshoeSystem(cfg, n, coarse, ftol_rel)
    return [hs.land(j1, y) for y in targets]


def horseshoe_points(cfg: PerturbedMapConfig, n: int | None = None, j3_per_j2: int = 1,
                     seed: int = 0, coarse: int = 64, ftol_rel: float = 1e-4,
                     mapper=None) -> HorseshoePoints:
    """Start points on the flat graphs realizing depth-3 itineraries I_j1 -> I_j2 -> I_j3.

    Every (j1, j2) pair is covered. For each j2 the third symbol runs over
    ``j3_per_j2`` choices: j2 itself, then seeded random symbols. Landing
    targets are met to ``ftol_rel`` of a strip width. With a ``mapper``
    (signature of ``map``) the rows j1 are solved as independent jobs.
    """
    hs = HorseshoeSystem(cfg, n, coarse, ftol_rel)
    js = list(hs.symbols)
    rng = np.random.Generator(np.random.Philox(seed))
    mids = {j: 0.5 * sum(strip(cfg, hs.n, j)) for j in js}
    second: list[tuple[int, int, float]] = []
    for j2 in js:
        others = [j for j in js if j != j2]
        choice = [j2] + [int(x) for x in rng.choice(others, size=j3_per_j2 - 1, replace=False)]
        second += [(j2, j3, hs.land(j2, mids[j3])) for j3 in choice]
    targets = [y for _, _, y in second]
    if mapper is None:
        xs_rows = [[hs.land(j1, y) for y in targets] for j1 in js]
    else:
        xs_rows = mapper(_land_row, [(cfg, hs.n, coarse, ftol_rel, j1, targets) for j1 in js])
    pts, its, steps = [], [], []
    for j1, xs in zip(js, xs_rows):
        for (j2, j3, _), x in zip(second, xs):
            pts.append(from_chart((x, 0.0), 0))
            its.append((j1, j2, j3))
            steps.append(hs.branch(j1))
    return HorseshoePoints(np.array(pts), np.array(its), np.array(steps), hs.n)


@dataclass
class HorseshoeExponent:
    itinerary: list[int]
    steps: int
    lam_hat: float
    frequency: float
    margin: float  # log(6/5)/r - lam_hat
    chi_measured: float  # margin / frequency
    chi: float
    bound: float  # log(6/5)/r - chi * frequency
    passed: bool
    normal_blocks_pass: bool
    special_blocks_pass: bool
    aggregate_pass: bool
    worst_normal_log_ratio: float
    segments: int
    special: int
    max_jump: float
    violated: list[str] = field(default_factory=list)

    def row(self) -> dict:
        return {
            "itinerary": "-".join(map(str, self.itinerary)), "steps": self.steps,
            "lam_hat": self.lam_hat, "delta_frequency": self.frequency, "margin": self.margin,
            "chi_measured": self.chi_measured, "bound": self.bound, "pass": int(self.passed),
            "normal_blocks_pass": int(self.normal_blocks_pass),
            "worst_normal_log_ratio": self.worst_normal_log_ratio,
            "segments": self.segments, "special": self.special, "max_jump": self.max_jump,
            "violated": ";".join(self.violated),
        }


def horseshoe_exponent(hs: HorseshoeOrbit, r: float, kappa: float, chi: float = 1.0,
                       A: float = math.e) -> HorseshoeExponent:
    """Exponent bound and block growth checks along a chained horseshoe orbit."""
    orb = hs.orbit
    lam_hat = float(orb.log_growth[-1] / orb.steps)
    fr = delta_frequency(orb).frequency
    margin = LAM_LOG / r - lam_hat
    bound = LAM_LOG / r - chi * fr
    recs = classify_special(segment_orbit(orb).records, r)
    special = [False] + [rec.special for rec in recs]
    violated = []
    passed = lam_hat < bound
    if not passed:
        violated.append("exponent bound")
    if len(recs) >= 2:
        decomp = block_decompose(special, 1, len(recs))
        rep = check_block_growth(recs, decomp, r, kappa, A)
        normal = [c.log_ratio for c in rep.blocks if c.block.kind == "normal"]
        worst = max(normal) if normal else -math.inf
        nb, sb, ag = rep.normal_pass, rep.special_pass, rep.aggregate_pass
    else:
        worst, nb, sb, ag = -math.inf, True, True, True
    for ok, name in ((nb, "normal-block growth"), (sb, "special-block growth"), (ag, "aggregate growth")):
        if not ok:
            violated.append(name)
    return HorseshoeExponent(
        hs.itinerary, orb.steps, lam_hat, fr, margin, margin / fr if fr > 0 else math.inf, chi, bound,
        passed, nb, sb, ag, worst, len(recs), sum(x.special for x in recs), hs.max_jump, violated)


# ---------------------------------------------------------------------------
# periodic return orbits parametrized by the kicked height
# ---------------------------------------------------------------------------


@dataclass
class KickedReturnOrbit:
    """A period-one return orbit through a wiggle region.

    The orbit leaves the region at chart height ``exp(log_Y)`` just after
    the kick and arrives back (one corner on) at the same abscissa ``X0``.
    Kicks of order LAMBDA**-T are far below the spacing of doubles near
    ``X0``, so the height is the unknown and ``X0`` is fixed; the exact orbit
    lies within a few ulps of ``X0``.
    """

    variant: str
    n: int
    T: float
    X0: float
    log_Y: float
    kick_slope: float  # dY/dX of the wiggle at X0
    period: int
    lam_hat: float  # finite-time exponent of the chained orbit
    lam_periodic: float  # log spectral radius of the period matrix / period
    returns: int
    arrival_error: float  # |X' - X0| of the first leg
    orbit: TangentOrbit | None = None

    def log_n_terms(self) -> float:
        return math.log(self.n) ** 2 - 4.0 * math.log(self.n)

    @property
    def C_measured(self) -> float:
        """C with lam_hat = (T lam - (log n)^2 + 4 log n - C) / (T + C)."""
        return (self.T * LAM_LOG - self.log_n_terms() - self.lam_hat * self.T) / (1.0 + self.lam_hat)

    def row(self) -> dict:
        return {"variant": self.variant, "n": self.n, "T": self.T, "X0": self.X0, "log_Y": self.log_Y,
                "kick_slope": self.kick_slope, "period": self.period, "lam_hat": self.lam_hat,
                "lam_periodic": self.lam_periodic, "C_measured": self.C_measured,
                "rel_gap": abs(self.lam_hat - LAM_LOG) / LAM_LOG, "arrival_error": self.arrival_error}


def region_anchor(cfg: PerturbedMapConfig, n: int) -> float:
    """Abscissa near the middle of region n where the wiggle is steepest.

    For ``gbar`` this is a zero of the cosine, for ``g`` a zero of the sine
    inside the middle strip.
    """
    e = schedule_entry(cfg.schedule, n)
    mid = 0.5 * (e.a + e.b)
    if cfg.variant == "gbar":
        period = 1.0 / (10.0 * n**4)  # zeros of cos(10 pi n^4 X) are period apart
        k = round(mid / period - 0.5)
        return (k + 0.5) * period
    if cfg.variant == "g":
        c = e.N / e.ell
        return e.a + 2.0 * round(0.5 * c * (mid - e.a)) / c
    raise ValueError("the anchor needs a wiggle variant")


def _arrive_from(X0: float, log_Y: float, cfg0: np.ndarray, budget: int, v=(1.0, 0.0)):
    return first_arrival(X0, math.exp(log_Y), cfg0, 0, v, budget)


def kicked_return_orbit(cfg: PerturbedMapConfig, n: int, T: float, returns: int = 6,
                        grid: int = 64, budget: int | None = None, keep_orbit: bool = False,
                        X0: float | None = None) -> KickedReturnOrbit:
    """Period-one return orbit through region n whose kicked height is about LAMBDA**-T.

    The height is searched over one fundamental domain ``[LAMBDA**-T, LAMBDA**(1-T)]``
    of the corner dynamics, which every arrival abscissa crosses once.
    """
    X0 = region_anchor(cfg, n) if X0 is None else X0
    budget = 20 * (int(T) + 200) if budget is None else budget
    cfg0 = cfg.without_perturbation().engine_config()
    _, s, g22 = eng.wiggle(VARIANT_CODES[cfg.variant], cfg.region_row(n), X0, 0.0)
    J = np.array([[1.0, 0.0], [s, g22]])
    lo = -T * LAM_LOG
    grid_logs = np.linspace(lo, lo + LAM_LOG, grid + 1)
    arr = [_arrive_from(X0, ly, cfg0, budget) for ly in grid_logs]
    resid = np.array([a.X - X0 if a.found else math.nan for a in arr])
    steps = np.array([a.steps for a in arr])
    cells = [i for i in range(grid) if steps[i] == steps[i + 1] > 0 and resid[i] * resid[i + 1] <= 0]
    if not cells:
        raise RuntimeError(f"no return to X0={X0} from heights near LAMBDA**-{T}")
    i = cells[0]
    log_Y = brentq(lambda ly: _arrive_from(X0, ly, cfg0, budget).X - X0, grid_logs[i], grid_logs[i + 1],
                   xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    first = _arrive_from(X0, log_Y, cfg0, budget)
    # period matrix: leg derivative followed by the kick
    _, D = return_jacobian(X0, math.exp(log_Y), cfg0, 0, budget)
    M = J @ D
    lam_periodic = float(math.log(max(abs(np.linalg.eigvals(M)))) / first.steps)
    # arrivals are tangent to the edge, so start from the kicked image of the horizontal
    legs, kicks = [], []
    v = J @ np.array([1.0, 0.0])
    v /= np.hypot(*v)
    for k in range(returns):
        leg, a = return_leg(X0, math.exp(log_Y), cfg0, 0, tuple(v), budget)
        legs.append(leg)
        w = J @ np.array(a.direction)
        nw = float(np.hypot(*w))
        kicks.append(math.log(nw))
        v = w / nw
    orbit = chain(legs, kicks[:-1])
    lam_hat = float(orbit.log_growth[-1] / orbit.steps)
    return KickedReturnOrbit(cfg.variant, n, T, X0, log_Y, float(s), first.steps, lam_hat,
                             lam_periodic, returns, abs(first.X - X0), orbit if keep_orbit else None)
