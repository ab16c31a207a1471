"""Separated sets, entropy slopes and horseshoe certificates."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.stats import qmc

from . import engine as eng
from .basemap import as_engine_config
from .perturbation import PerturbedMapConfig, from_chart
from .returns import first_arrival
from .smooth import LAMBDA, schedule_entry

IDENTITY = "identity"


# ---------------------------------------------------------------------------
# orbits and distances
# ---------------------------------------------------------------------------


def orbit_points(points, n: int, map_cfg) -> np.ndarray:
    """The first n iterates (k = 0..n-1) of each point: shape (m, n, 2)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if n < 1:
        raise ValueError("n must be >= 1")
    if isinstance(map_cfg, str) and map_cfg == IDENTITY:
        return np.repeat(pts[:, None, :], n, axis=1)
    if callable(map_cfg):  # vectorized planar map
        out = np.empty((len(pts), n, 2))
        out[:, 0] = pts
        for k in range(1, n):
            out[:, k] = map_cfg(out[:, k - 1])
        return out
    cfg = as_engine_config(map_cfg)
    out = np.empty((len(pts), n, 2))
    xs, ys = np.empty(n), np.empty(n)
    for i, (x, y) in enumerate(pts):
        st, tv = eng.init_state(x, y, 1.0, 0.0)
        eng.run_points(st, tv, n - 1, cfg, xs, ys)
        out[i, :, 0] = xs
        out[i, :, 1] = ys
    return out


def bowen_distance(p, q, n: int, map_cfg, scale: float = 1.0) -> float:
    """max_{0 <= k < n} scale * |f^k p - f^k q|."""
    orb = orbit_points([p, q], n, map_cfg)
    return float(scale * np.max(np.linalg.norm(orb[0] - orb[1], axis=1)))


def greedy_separated(orbits: np.ndarray, eps: float, scale: float = 1.0) -> list[int]:
    """Indices of a greedily built (eps, n)-separated subset, in sample order."""
    kept: list[int] = []
    buf = np.empty_like(orbits)
    for i in range(len(orbits)):
        if kept:
            d = np.sqrt(np.max(np.sum((buf[: len(kept)] - orbits[i]) ** 2, axis=2), axis=1))
            if np.min(d) * scale < eps:
                continue
        buf[len(kept)] = orbits[i]
        kept.append(i)
    return kept


def min_pairwise_bowen(orbits: np.ndarray, scale: float = 1.0) -> float:
    best = math.inf
    for i in range(len(orbits) - 1):
        d = np.sqrt(np.max(np.sum((orbits[i + 1:] - orbits[i]) ** 2, axis=2), axis=1))
        best = min(best, float(np.min(d)) * scale)
    return best


@dataclass
class SeparatedSetQuery:
    eps: float
    n: int
    samples: np.ndarray
    map_cfg: object
    scale: float = 1.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float).reshape(-1, 2)
        if not self.eps > 0 or not self.eps * 1.0 < 4.0 * self.scale:
            raise ValueError("eps must lie in (0, diameter of the disk)")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if np.any(np.sum(self.samples**2, axis=1) > 4.0 + 1e-12):
            raise ValueError("samples must lie in the disk of radius 2")


def separated_count(query: SeparatedSetQuery, orbits: np.ndarray | None = None) -> int:
    """Size of a greedy (eps, n)-separated subset of the samples.

    The retained set is re-verified pairwise before the count is returned.
    """
    if orbits is None:
        orbits = orbit_points(query.samples, query.n, query.map_cfg)
    orbits = orbits[:, : query.n]
    kept = greedy_separated(orbits, query.eps, query.scale)
    if len(kept) > 1 and min_pairwise_bowen(orbits[kept], query.scale) < query.eps:
        raise AssertionError("greedy set failed its separation re-check")
    return len(kept)


def lowdisc_samples(m: int, seed: int = 0, lo=(-0.5, -0.5), hi=(0.5, 0.5)) -> np.ndarray:
    """Scrambled Sobol points in a box; deterministic given the seed."""
    sob = qmc.Sobol(d=2, scramble=True, seed=np.random.Generator(np.random.Philox(seed)))
    return qmc.scale(sob.random(m), lo, hi)


@dataclass
class EntropyEstimate:
    eps: list[float]
    ns: list[int]
    counts: np.ndarray  # counts[i, k] for eps[i], ns[k]
    slopes: list[float]
    saturated: list[bool]
    samples: int

    @property
    def h_proxy(self) -> float:
        """Largest valid slope (smallest eps wins when monotone)."""
        valid = [s for s, sat in zip(self.slopes, self.saturated) if not sat]
        return max(valid) if valid else math.nan

    def rows(self):
        for i, e in enumerate(self.eps):
            for k, n in enumerate(self.ns):
                yield {"eps": e, "n": n, "count": int(self.counts[i, k])}


def entropy_estimate(map_cfg, eps_grid, n_grid, samples, scale: float = 1.0,
                     orbits: np.ndarray | None = None) -> EntropyEstimate:
    """Least-squares slope of log(count) against n for every eps."""
    eps_grid = [float(e) for e in eps_grid]
    n_grid = sorted(int(n) for n in n_grid)
    if not eps_grid or not n_grid:
        raise ValueError("grids must be nonempty")
    samples = np.asarray(samples, dtype=float).reshape(-1, 2)
    if orbits is None:
        orbits = orbit_points(samples, n_grid[-1], map_cfg)
    counts = np.zeros((len(eps_grid), len(n_grid)), dtype=np.int64)
    for i, e in enumerate(eps_grid):
        for k, n in enumerate(n_grid):
            counts[i, k] = separated_count(SeparatedSetQuery(e, n, samples, map_cfg, scale), orbits)
    # a set separated at (eps', n') is separated at every eps <= eps', n >= n'; greedy alone is
    # order-dependent, so carry the best such set along both axes
    raw = counts.copy()
    for i, e in enumerate(eps_grid):
        coarser = [i2 for i2, e2 in enumerate(eps_grid) if e2 >= e]
        for k in range(len(n_grid)):
            counts[i, k] = raw[coarser, : k + 1].max()
    slopes, sat = [], []
    for i in range(len(eps_grid)):
        y = np.log(counts[i])
        slopes.append(float(np.polyfit(n_grid, y, 1)[0]) if len(n_grid) > 1 else 0.0)
        sat.append(bool(np.any(counts[i] >= len(samples))))
    return EntropyEstimate(eps_grid, n_grid, counts, slopes, sat, len(samples))


# ---------------------------------------------------------------------------
# graphs over the strips I_j and crossings
# ---------------------------------------------------------------------------


def strip(cfg: PerturbedMapConfig, n: int, j: int) -> tuple[float, float]:
    """I_j = [a_n + (j - 1/4) ell/N, a_n + (j + 1/4) ell/N] in chart units."""
    e = schedule_entry(cfg.schedule, n)
    if not 1 <= j <= e.N - 1:
        raise ValueError(f"j={j} outside 1..{e.N - 1}")
    h = e.ell / e.N
    return e.a + (j - 0.25) * h, e.a + (j + 0.25) * h


def graph_bounds(cfg: PerturbedMapConfig, n: int) -> tuple[float, float]:
    """(sup bound, slope bound) = (Lambda^{-T-1}/10, K^{-T})."""
    T = schedule_entry(cfg.schedule, n).T
    return LAMBDA ** (-T - 1) / 10.0, cfg.params.K ** (-T)


@dataclass
class GraphCurve:
    n: int
    j: int
    xs: np.ndarray
    ys: np.ndarray
    sup_bound: float
    slope_bound: float

    def sup(self) -> float:
        return float(np.max(np.abs(self.ys)))

    def max_slope(self) -> float:
        return float(np.max(np.abs(np.diff(self.ys) / np.diff(self.xs))))

    def is_member(self) -> bool:
        return bool(np.all(np.diff(self.xs) > 0) and self.sup() < self.sup_bound
                    and self.max_slope() < self.slope_bound)

    def __call__(self, x):
        return np.interp(x, self.xs, self.ys)


def make_graph(cfg: PerturbedMapConfig, n: int, j: int, seed: int | None = None,
               points: int = 256, slope: float | None = None) -> GraphCurve:
    """A sampled graph over I_j.

    Default is the flat graph. With a seed, a random smooth graph within
    half of both bounds; with ``slope``, the straight line of that slope
    through the middle of I_j (used to exercise the slope bound).
    """
    if points < 256:
        raise ValueError("a graph needs at least 256 sample points")
    lo, hi = strip(cfg, n, j)
    xs = np.linspace(lo, hi, points)
    sb, kb = graph_bounds(cfg, n)
    if slope is not None:
        ys = slope * (xs - 0.5 * (lo + hi))
    elif seed is None:
        ys = np.zeros(points)
    else:
        rng = np.random.Generator(np.random.Philox(seed))
        amp_cap = min(0.5 * sb, 0.5 * kb * (hi - lo) / (2 * math.pi * 3))
        c = rng.uniform(-1, 1, 3)
        t = (xs - lo) / (hi - lo)
        ys = amp_cap / 3.0 * sum(ck * np.sin((k + 1) * math.pi * t) for k, ck in enumerate(c))
    return GraphCurve(n, j, xs, ys, sb, kb)


@dataclass
class CrossResult:
    j: int
    k: int
    found: bool
    corner_from: int
    corner_to: int
    s_range: tuple[float, float] | None = None  # start abscissas of the witness sub-arc
    steps: int | None = None
    witness_X: np.ndarray | None = field(default=None, repr=False)
    witness_Y: np.ndarray | None = field(default=None, repr=False)
    reason: str = ""


class _StripScan:
    """Coarse scan of the return map along one graph, reused across targets."""

    def __init__(self, cfg, curve: GraphCurve, corner: int, coarse: int, budget: int):
        self.cfg, self.curve, self.corner, self.budget = cfg, curve, corner, budget
        self.ecfg = cfg.engine_config()
        self.X = np.linspace(curve.xs[0], curve.xs[-1], coarse + 1)
        arr = [self.arrive(x) for x in self.X]
        self.Xp = np.array([a.X for a in arr])
        self.steps = np.array([a.steps for a in arr])

    def arrive(self, x):
        return first_arrival(float(x), float(self.curve(x)), self.ecfg, self.corner, budget=self.budget)

    def solve(self, i: int, target: float) -> float:
        """Start abscissa on the graph, inside coarse cell i, arriving at ``target``."""
        return brentq(lambda s: self.arrive(s).X - target, self.X[i], self.X[i + 1],
                      xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=200)

    def solve_loose(self, i: int, target: float, ftol: float) -> tuple[float, object]:
        """Illinois regula falsi from the stored cell endpoints; stops once |X' - target| <= ftol."""
        a, b = self.X[i], self.X[i + 1]
        fa, fb = self.Xp[i] - target, self.Xp[i + 1] - target
        side = 0
        for _ in range(100):
            s = b - fb * (b - a) / (fb - fa) if fb != fa else 0.5 * (a + b)
            arr = self.arrive(s)
            fs = arr.X - target
            if abs(fs) <= ftol or arr.steps != self.steps[i]:
                break
            if (fs < 0) == (fb < 0):
                b, fb = s, fs
                if side == -1:
                    fa *= 0.5
                side = -1
            else:
                a, fa = s, fs
                if side == 1:
                    fb *= 0.5
                side = 1
        return s, arr

    def spanning_branch(self, lo: float, hi: float) -> int:
        """First arrival time whose coarse image covers [lo, hi]."""
        for st in dict.fromkeys(int(x) for x in self.steps if x > 0):
            sel = self.steps == st
            if self.Xp[sel].min() <= lo and self.Xp[sel].max() >= hi:
                return st
        raise RuntimeError("no single branch spans the target range")

    def brackets(self, target: float):
        """Coarse intervals on one branch whose arrivals straddle ``target``."""
        for i in range(len(self.X) - 1):
            if self.steps[i] > 0 and self.steps[i] == self.steps[i + 1]:
                if (self.Xp[i] - target) * (self.Xp[i + 1] - target) <= 0:
                    yield i


def cross_check(cfg: PerturbedMapConfig, n: int, j: int, k: int, curve: GraphCurve | None = None,
                corner: int = 0, coarse: int = 64, interior: int = 64, max_rounds: int = 4,
                scan: _StripScan | None = None, budget: int | None = None) -> CrossResult:
    """Does the first-arrival image of a graph over I_j contain a graph over I_k?

    The image lives in corner ``corner + 1``. A witness is a sub-arc whose
    arrival abscissa runs monotonically across I_k, on one arrival time,
    with the sampled image inside the sup and slope bounds.
    """
    curve = make_graph(cfg, n, j) if curve is None else curve
    T = schedule_entry(cfg.schedule, n).T
    budget = 20 * (T + 200) if budget is None else budget
    scan = _StripScan(cfg, curve, corner, coarse, budget) if scan is None else scan
    to = (corner + 1) % 4
    k_lo, k_hi = strip(cfg, n, k)
    sb, kb = graph_bounds(cfg, n)
    gap = LAMBDA ** (-T - 1) / 100.0
    if not np.any(scan.steps > 0):
        return CrossResult(j, k, False, corner, to, reason="no arrival in the next corner")
    # aim slightly outside I_k: the solved endpoints are only good to ~1e-11
    pad = 1e-6 * (k_hi - k_lo)
    t_lo, t_hi = k_lo - pad, k_hi + pad
    hi_cells = list(scan.brackets(t_hi))
    failures: list[str] = []
    for i in scan.brackets(t_lo):
        same = [m for m in hi_cells if scan.steps[m] == scan.steps[i]
                and np.all(scan.steps[min(i, m):max(i, m) + 2] == scan.steps[i])]
        if not same:
            continue
        m = min(same, key=lambda c: abs(c - i))
        s_a, s_b = scan.solve(i, t_lo), scan.solve(m, t_hi)
        s0, s1 = min(s_a, s_b), max(s_a, s_b)
        ss = list(np.linspace(s0, s1, interior + 1))
        arr = [scan.arrive(s) for s in ss]
        for _ in range(max_rounds):
            Xs = np.array([a.X for a in arr])
            Ys = np.array([a.Y for a in arr])
            wide = np.flatnonzero(np.hypot(np.diff(Xs), np.diff(Ys)) > gap)
            if wide.size == 0:
                break
            for w in wide[::-1]:
                mid = 0.5 * (ss[w] + ss[w + 1])
                ss.insert(w + 1, mid)
                arr.insert(w + 1, scan.arrive(mid))
        steps = {a.steps for a in arr}
        Xs = np.array([a.X for a in arr])
        Ys = np.array([a.Y for a in arr])
        dX = np.diff(Xs)
        reasons = []
        if len(steps) != 1:
            reasons.append("sub-arc spans two arrival times")
        if not (np.all(dX > 0) or np.all(dX < 0)):
            reasons.append("image not monotone in X")
        if not (min(Xs) <= k_lo and max(Xs) >= k_hi):
            reasons.append("image does not span I_k")
        if not np.max(np.abs(Ys)) < sb:
            reasons.append("image leaves the sup bound")
        if not np.max(np.abs(np.diff(Ys) / dX)) < kb:
            reasons.append("image slope above bound")
        if np.any(np.hypot(dX, np.diff(Ys)) > gap):
            reasons.append("image polyline too coarse")
        if not reasons:
            order = np.argsort(Xs)
            return CrossResult(j, k, True, corner, to, (s0, s1), steps.pop(), Xs[order], Ys[order])
        failures.append(f"sub-arc {i}: " + "; ".join(reasons))
    return CrossResult(j, k, False, corner, to,
                       reason=" | ".join(failures) or "arrivals never straddle I_k")


def itinerary_point(cfg: PerturbedMapConfig, n: int, j: int, k: int, corner: int = 0,
                    scan: _StripScan | None = None, coarse: int = 64):
    """A start abscissa in I_j (on the flat graph) whose return lands at the centre of I_k."""
    curve = make_graph(cfg, n, j)
    T = schedule_entry(cfg.schedule, n).T
    scan = _StripScan(cfg, curve, corner, coarse, 20 * (T + 200)) if scan is None else scan
    k_lo, k_hi = strip(cfg, n, k)
    target = 0.5 * (k_lo + k_hi)
    for i in scan.brackets(target):
        x = scan.solve(i, target)
        return x, scan.arrive(x)
    return None


# ---------------------------------------------------------------------------
# certificate
# ---------------------------------------------------------------------------


def config_hash(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def cfg_summary(cfg: PerturbedMapConfig) -> dict:
    s = cfg.schedule
    return {
        "K": cfg.params.K, "L": cfg.params.L, "variant": cfg.variant, "n0": s.n0, "r": s.r,
        "T": {str(n): int(t) for n, t in sorted(s.T.items())}, "n_max": cfg.n_max,
    }


def stratified_pairs(N: int, budget: int = 20, seed: int = 0) -> list[tuple[int, int]]:
    """(j, k) pairs over 1..N-1: a diagonal share plus one pair per grid cell."""
    rng = np.random.Generator(np.random.Philox(seed))
    m = N - 1
    side = max(1, int(math.ceil(math.sqrt(budget * 3 / 4))))
    edges = np.linspace(1, m + 1, side + 1)
    pairs = []
    for a in range(side):
        for b in range(side):
            lo_j, hi_j = int(edges[a]), max(int(edges[a]) + 1, int(edges[a + 1]))
            lo_k, hi_k = int(edges[b]), max(int(edges[b]) + 1, int(edges[b + 1]))
            pairs.append((int(rng.integers(lo_j, hi_j)), int(rng.integers(lo_k, hi_k))))
    need_diag = max(1, budget - len(pairs))
    for j in rng.choice(np.arange(1, m + 1), size=min(m, need_diag), replace=False):
        pairs.append((int(j), int(j)))
    return sorted(set(pairs))


@dataclass
class HorseshoeCertificate:
    n: int
    N: int
    T: int
    pairs: list[dict]
    passed: bool
    bound: float | None  # log(N - 1)/T, only when every tested pair crossed
    separation: dict | None = None
    config: dict = field(default_factory=dict)
    config_hash: str = ""

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1, default=_json_float)


def _json_float(x):
    if isinstance(x, (np.floating, float)):
        return float(repr(float(x)))
    if isinstance(x, np.integer):
        return int(x)
    raise TypeError(type(x))


def _cross_group(job):
    """Cross-check every target k of one strip j (a unit of parallel work)."""
    cfg, n, j, ks, corner, coarse = job
    e = schedule_entry(cfg.schedule, n)
    scan = _StripScan(cfg, make_graph(cfg, n, j), corner, coarse, 20 * (e.T + 200))
    return j, scan, [cross_check(cfg, n, j, k, scan.curve, corner, scan=scan) for k in ks]


def horseshoe_certificate(cfg: PerturbedMapConfig, n: int | None = None, pairs=None,
                          pair_budget: int = 20, seed: int = 0, separation: bool = True,
                          corner: int = 0, coarse: int = 64, mapper=map) -> HorseshoeCertificate:
    """Cross-check a stratified set of (j, k) pairs and, if all pass, emit the bound.

    ``mapper`` has the signature of the builtin ``map``; pass a pool's map
    to spread the strips over workers.

    With ``separation``, itinerary points for the tested pairs are built
    and their pairwise Bowen distance (chart units) over the return time
    is required to reach ell/(2N).
    """
    n = cfg.schedule.n0 if n is None else n
    e = schedule_entry(cfg.schedule, n)
    pairs = stratified_pairs(e.N, pair_budget, seed) if pairs is None else [tuple(p) for p in pairs]
    groups: dict[int, list[int]] = {}
    for j, k in pairs:
        groups.setdefault(j, []).append(k)
    scans: dict[int, _StripScan] = {}
    found: dict[tuple[int, int], CrossResult] = {}
    for j, scan, results in mapper(_cross_group, [(cfg, n, j, ks, corner, coarse) for j, ks in groups.items()]):
        scans[j] = scan
        for k, res in zip(groups[j], results):
            found[(j, k)] = res
    rows = []
    ok = True
    for j, k in pairs:
        res = found[(j, k)]
        rows.append({"j": j, "k": k, "found": res.found, "corner_from": res.corner_from,
                     "corner_to": res.corner_to, "steps": res.steps, "reason": res.reason})
        ok &= res.found
    summary = cfg_summary(cfg)
    cert = HorseshoeCertificate(n, e.N, e.T, rows, ok, None, None, summary, config_hash(summary))
    if not ok:
        return cert
    if separation:
        sep = itinerary_separation(cfg, n, pairs, scans, corner)
        cert.separation = sep
        if not sep["passed"]:
            cert.passed = False
            return cert
    cert.bound = math.log(e.N - 1) / e.T
    return cert


def itinerary_separation(cfg: PerturbedMapConfig, n: int, pairs, scans=None, corner: int = 0) -> dict:
    """Pairwise Bowen distance of m = 2 itinerary points, in chart units."""
    e = schedule_entry(cfg.schedule, n)
    eps = e.ell / (2 * e.N)
    scans = {} if scans is None else scans
    pts, horizon, labels = [], 0, []
    for j, k in pairs:
        hit = itinerary_point(cfg, n, j, k, corner, scans.get(j))
        if hit is None:
            return {"passed": False, "eps": eps, "reason": f"no itinerary point for {(j, k)}"}
        x, a = hit
        pts.append(from_chart((x, 0.0), corner))
        horizon = max(horizon, a.steps + 1)
        labels.append([j, k])
    orb = orbit_points(pts, horizon, cfg)
    dmin = min_pairwise_bowen(orb, eng.SCALE) if len(pts) > 1 else math.inf
    return {"passed": bool(dmin >= eps), "eps": eps, "min_distance": dmin, "horizon": horizon,
            "itineraries": labels}
