"""Tangent cocycles, exponents, corner visits and the segment/block bookkeeping."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import engine as eng
from .basemap import LAM_LOG, as_engine_config, tau_inv


class NoCornerVisit(RuntimeError):
    pass


@dataclass
class TangentOrbit:
    """An orbit with its renormalized tangent.

    ``log_growth[k]`` is log|Df^k v| - log|v|; ``directions[k]`` is the unit
    tangent at step k. ``corner``, ``log_a``, ``log_b`` and ``log_theta``
    describe the host affine corner (``corner == -1`` outside C).
    """

    points: np.ndarray
    directions: np.ndarray
    growth: np.ndarray
    log_growth: np.ndarray
    corner: np.ndarray
    log_a: np.ndarray
    log_b: np.ndarray
    log_theta: np.ndarray
    region: np.ndarray

    @property
    def steps(self) -> int:
        return len(self.growth)


def iterate_tangent(p, v, steps: int, map_cfg) -> TangentOrbit:
    """Run the orbit of (p, v) for ``steps`` iterates, renormalizing each step."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    vx, vy = float(v[0]), float(v[1])
    if vx == 0.0 and vy == 0.0:
        raise ValueError("tangent vector must be nonzero")
    x, y = float(p[0]), float(p[1])
    if x * x + y * y > 4.0 + 1e-12:
        raise ValueError("point outside the disk of radius 2")
    cfg = as_engine_config(map_cfg)
    st, tv = eng.init_state(x, y, vx, vy)
    return orbit_from_state(st, tv, steps, cfg)


def orbit_from_state(st, tv, steps: int, cfg: np.ndarray) -> TangentOrbit:
    """Record ``steps`` iterates of a prepared engine state (modified in place)."""
    m = steps + 1
    xs, ys, dx, dy = (np.empty(m) for _ in range(4))
    growth = np.empty(steps)
    corner = np.empty(m, dtype=np.int64)
    region = np.empty(m, dtype=np.int64)
    la, lb, lt = np.empty(m), np.empty(m), np.empty(m)
    eng.run_orbit(st, tv, steps, cfg, xs, ys, dx, dy, growth, corner, la, lb, lt, region)
    if not np.all(np.isfinite(growth)):
        raise FloatingPointError("tangent vector collapsed to zero")
    pts = np.column_stack([xs, ys])
    if np.any(np.einsum("ij,ij->i", pts, pts) > 4.0 + 1e-9):
        raise AssertionError("orbit left the disk")
    log_growth = np.concatenate([[0.0], np.cumsum(growth)])
    return TangentOrbit(pts, np.column_stack([dx, dy]), growth, log_growth, corner, la, lb, lt, region)


@dataclass
class LyapunovEstimate:
    mean: float  # log-growth / steps
    liminf: float  # min of the running averages at the 10 window ends
    steps: int


def running_liminf(log_growth: np.ndarray, windows: int = 10) -> float:
    steps = len(log_growth) - 1
    w = steps // windows
    ends = [w * k for k in range(1, windows + 1)]
    return min(log_growth[e] / e for e in ends)


def lyapunov(p, v, steps: int, map_cfg, orbit: TangentOrbit | None = None) -> LyapunovEstimate:
    """Finite-horizon exponent of (p, v) with a liminf proxy."""
    if steps < 1000:
        raise ValueError("steps must be >= 1000")
    orbit = iterate_tangent(p, v, steps, map_cfg) if orbit is None else orbit
    return LyapunovEstimate(float(orbit.log_growth[-1] / steps), running_liminf(orbit.log_growth), steps)


# ---------------------------------------------------------------------------
# the set Delta
# ---------------------------------------------------------------------------


def in_delta(p) -> bool:
    """Membership in the union of tau_i(]2/5, 5/12] x [-1/2, -1/10])."""
    for i in range(4):
        u, w = tau_inv(i, p)
        if 0.4 < u <= 5.0 / 12.0 and -0.5 <= w <= -0.1:
            return True
    return False


def delta_mask(points: np.ndarray) -> np.ndarray:
    x, y = points[:, 0], points[:, 1]
    mask = np.zeros(len(points), dtype=bool)
    # (u, w) = tau_i^{-1}(x, y) for i = 0..3
    for u, w in ((x, y), (-y, x), (-x, -y), (y, -x)):
        mask |= (u > 0.4) & (u <= 5.0 / 12.0) & (w >= -0.5) & (w <= -0.1)
    return mask


@dataclass
class DeltaFrequency:
    frequency: float
    liminf: float
    visits: int


def delta_frequency(orbit: TangentOrbit | np.ndarray, windows: int = 10) -> DeltaFrequency:
    """Fraction of the first n iterates (n = orbit steps) that lie in Delta."""
    pts = orbit.points if isinstance(orbit, TangentOrbit) else np.asarray(orbit)
    n = len(pts) - 1 if isinstance(orbit, TangentOrbit) else len(pts)
    hits = delta_mask(pts[:n]).astype(float)
    counts = np.concatenate([[0.0], np.cumsum(hits)])
    w = n // windows
    lim = min(counts[w * k] / (w * k) for k in range(1, windows + 1)) if w > 0 else counts[-1] / max(n, 1)
    return DeltaFrequency(float(counts[-1] / n), float(lim), int(counts[-1]))


# ---------------------------------------------------------------------------
# affine segments
# ---------------------------------------------------------------------------


@dataclass
class AffineSegmentRecord:
    """Segment S_n = [t_prev, s] in the corners, followed by the excursion to t."""

    t_prev: int
    s: int
    t: int
    corner: int
    theta_log: float  # log theta_n at t (+inf: vertical, -inf: horizontal)
    theta_tilde_log: float  # log of 1/alpha(s_n)
    log_v_prev: float  # log|v| at t_prev
    log_v_s: float
    log_v: float  # log|v| at t
    log_a_s: float  # log of the corner coordinate (x(s_n))_1
    region: int  # engine region index at t_prev, -1 if none
    special: bool = False

    @property
    def tau(self) -> int:
        return self.t - self.t_prev

    @property
    def tau_prime(self) -> int:
        return self.s - self.t_prev

    @property
    def d(self) -> int:
        return self.t - self.s

    @property
    def theta(self) -> float:
        return math.exp(self.theta_log) if self.theta_log < math.inf else math.inf

    @property
    def theta_is_inf(self) -> bool:
        return self.theta_log == math.inf


@dataclass
class Segmentation:
    records: list[AffineSegmentRecord]
    anchor: int  # t_0
    degenerate: bool = False  # orbit never leaves C after the anchor


def segment_orbit(orbit: TangentOrbit) -> Segmentation:
    """Cut the orbit into affine segments, starting at its first entry into C."""
    inside = orbit.corner >= 0
    entries = np.flatnonzero(inside[1:] & ~inside[:-1]) + 1
    if entries.size == 0:
        if inside.all():
            return Segmentation([], 0, degenerate=True)
        raise NoCornerVisit("orbit never enters the affine corners")
    anchor = int(entries[0])
    exits = np.flatnonzero(inside[:-1] & ~inside[1:])  # s with s in C, s+1 not
    records = []
    for t_prev, t in zip(entries[:-1], entries[1:]):
        s = int(exits[(exits >= t_prev) & (exits < t)][0])
        t_prev, t = int(t_prev), int(t)
        lt_s = orbit.log_theta[s]
        records.append(AffineSegmentRecord(
            t_prev=t_prev, s=s, t=t, corner=int(orbit.corner[t]),
            theta_log=float(orbit.log_theta[t]), theta_tilde_log=float(-lt_s),
            log_v_prev=float(orbit.log_growth[t_prev]), log_v_s=float(orbit.log_growth[s]),
            log_v=float(orbit.log_growth[t]), log_a_s=float(orbit.log_a[s]),
            region=int(orbit.region[t_prev]),
        ))
    return Segmentation(records, anchor, degenerate=not records and inside[anchor:].all())


def special_threshold_log(tau_next: int, r: float) -> float:
    """log of Lambda^{-(1-1/r) tau_next}."""
    return -(1.0 - 1.0 / r) * tau_next * LAM_LOG


def classify_special(records: list[AffineSegmentRecord], r: float) -> list[AffineSegmentRecord]:
    """Flag t_n special when theta_n exceeds the threshold set by tau_{n+1}.

    The last record has no successor and stays unflagged.
    """
    for cur, nxt in zip(records, records[1:]):
        cur.special = bool(cur.theta_log > special_threshold_log(nxt.tau, r))
    if records:
        records[-1].special = False
    return records


# ---------------------------------------------------------------------------
# blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    kind: str  # "normal" or "special"
    j_start: int
    j_end: int


@dataclass
class BlockDecomposition:
    blocks: list[Block]  # left to right
    residual: int  # j_I, the index where the tiling starts
    n1: int
    n: int


def block_decompose(special: list[bool], n1: int, n: int) -> BlockDecomposition:
    """Tile [t_{n1}, t_n[ from the right by normal and special blocks.

    ``special[j]`` says whether t_j is special. A normal block [t_{j-1}, t_j[
    needs t_{j-1} not special; a special block [t_{j-2}, t_j[ needs t_{j-1}
    special. The tiling stops when no block fits inside [t_{n1}, t_j[.
    """
    if not 0 <= n1 <= n <= len(special):
        raise ValueError("need 0 <= n1 <= n <= len(special)")
    j = n
    blocks = []
    while True:
        if j - 1 >= n1 and not special[j - 1]:
            blocks.append(Block("normal", j - 1, j))
            j -= 1
        elif j - 2 >= n1 and special[j - 1]:
            blocks.append(Block("special", j - 2, j))
            j -= 2
        else:
            break
    return BlockDecomposition(blocks[::-1], j, n1, n)


# ---------------------------------------------------------------------------
# block growth
# ---------------------------------------------------------------------------


@dataclass
class BlockCheck:
    block: Block
    log_ratio: float  # log(|v_end| / (Lambda^{length/r} |v_start|))
    bound_log: float  # -log A for normal, -2 log A for special
    passed: bool


@dataclass
class GrowthReport:
    blocks: list[BlockCheck]
    normal_pass: bool
    special_pass: bool
    aggregate_lhs_log: float  # log|v_N|
    aggregate_rhs_log: float  # log(C(x,v) Lambda^{t_N/r} / A^N)
    aggregate_pass: bool
    segment_growth_c: float  # max over n of (-tau'_n kappa + tau'_{n+1} lambda) / kappa
    angle_powers: tuple[float, float]  # min/max of log_K(theta_n / (theta~_n + (x(s_n))_1))
    extra: dict = field(default_factory=dict)


def _log_v_at(records: list[AffineSegmentRecord], j: int) -> float:
    """log|v_j| = log|v(t_j)| with t_0 = records[0].t_prev."""
    return records[0].log_v_prev if j == 0 else records[j - 1].log_v


def _t_at(records: list[AffineSegmentRecord], j: int) -> int:
    return records[0].t_prev if j == 0 else records[j - 1].t


def check_block_growth(records: list[AffineSegmentRecord], decomp: BlockDecomposition,
                        r: float, kappa: float, A: float = math.e) -> GrowthReport:
    """Measure the per-block growth bounds and the aggregate bound on |v_N|.

    Times are indexed so that t_j is the start of segment j + 1 (t_0 the
    anchor). Log norms are relative to |v| at the start of the orbit.
    """
    logA = math.log(A)
    checks = []
    for b in decomp.blocks:
        length = _t_at(records, b.j_end) - _t_at(records, b.j_start)
        lr = _log_v_at(records, b.j_end) - _log_v_at(records, b.j_start) - LAM_LOG * length / r
        bound = -logA if b.kind == "normal" else -2.0 * logA
        checks.append(BlockCheck(b, lr, bound, lr <= bound))
    j0, n = decomp.residual, decomp.n
    log_c = _log_v_at(records, j0) - LAM_LOG * _t_at(records, j0) / r + j0 * logA
    lhs = _log_v_at(records, n)
    rhs = log_c + LAM_LOG * _t_at(records, n) / r - n * logA
    cs = [(-a.tau_prime * kappa + b.tau_prime * LAM_LOG) / kappa for a, b in zip(records, records[1:])]
    powers = []
    for rec in records:
        if rec.theta_log in (math.inf, -math.inf) or rec.theta_tilde_log in (math.inf, -math.inf):
            continue
        den = float(np.logaddexp(rec.theta_tilde_log, rec.log_a_s))
        powers.append((rec.theta_log - den) / kappa)
    return GrowthReport(
        blocks=checks,
        normal_pass=all(c.passed for c in checks if c.block.kind == "normal"),
        special_pass=all(c.passed for c in checks if c.block.kind == "special"),
        aggregate_lhs_log=lhs, aggregate_rhs_log=rhs, aggregate_pass=lhs <= rhs + 1e-9,
        segment_growth_c=max(cs) if cs else float("nan"),
        angle_powers=(min(powers), max(powers)) if powers else (float("nan"), float("nan")),
    )


# ---------------------------------------------------------------------------
# exponent bound
# ---------------------------------------------------------------------------


@dataclass
class ExponentReport:
    lam_hat: float
    lam_liminf: float
    frequency: float
    frequency_liminf: float
    chi: float
    bound: float  # log(6/5)/r - chi * frequency
    passed: bool
    delta_free: bool  # the orbit never met Delta; the bound is reported, not asserted
    segments: int = 0
    special: int = 0


def exponent_bound_check(p, v, steps: int, chi: float, map_cfg, r: float,
                         orbit: TangentOrbit | None = None) -> ExponentReport:
    """Compare the finite-time exponent with log(6/5)/r - chi * (Delta frequency)."""
    if not (-0.5 < p[0] < 0.5 and -0.5 < p[1] < 0.5):
        raise ValueError("p must lie in the open square")
    orbit = iterate_tangent(p, v, steps, map_cfg) if orbit is None else orbit
    lam = lyapunov(p, v, steps, map_cfg, orbit=orbit)
    fr = delta_frequency(orbit)
    bound = LAM_LOG / r - chi * fr.frequency
    try:
        seg = segment_orbit(orbit)
        recs = classify_special(seg.records, r)
    except NoCornerVisit:
        recs = []
    return ExponentReport(lam.mean, lam.liminf, fr.frequency, fr.liminf, chi, bound,
                          lam.mean < bound, fr.visits == 0, len(recs), sum(x.special for x in recs))


def exponent_csv_row(seed: int, rep: ExponentReport) -> dict:
    return {
        "seed": seed,
        "lam_hat": rep.lam_hat,
        "lam_liminf": rep.lam_liminf,
        "delta_frequency": rep.frequency,
        "segments": rep.segments,
        "special": rep.special,
        "bound": rep.bound,
        "pass": int(rep.passed),
        "delta_free": int(rep.delta_free),
    }
