"""Wiggle perturbations of the base map inside the four affine corners.

Points are handled in the corner chart ``(X, Y) = 24 * (tau_i^{-1}(p) + 1/2)``,
which identifies the corner ``tau_i(C0)`` with ``[0, 2]^2``. Region ``n``
of the schedule is the rectangle ``[a_n, b_n] x [-ell_n/N_n, ell_n/N_n]``
(variant ``g``) or ``[a_n, b_n] x [-1/n^4, 1/n^4]`` (variant ``gbar``),
copied into every corner.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import engine as eng
from .basemap import LAM_LOG, Params, map_jacobian, map_step, tau, tau_inv
from .smooth import LAMBDA, PerturbationSchedule, dpsi_array, psi_array, schedule_entry

VARIANTS = {"none": eng.VAR_NONE, "g": eng.VAR_G, "gbar": eng.VAR_GBAR}


@dataclass(frozen=True)
class PerturbedMapConfig:
    params: Params
    schedule: PerturbationSchedule
    variant: str = "g"
    n_max: int | None = None

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        top = min(self.schedule.n0 + 6, self.schedule.n_max) if self.n_max is None else self.n_max
        if top < self.schedule.n0:
            raise ValueError("n_max must be >= n0")
        if top > self.schedule.n_max:
            raise ValueError(f"n_max={top} exceeds the scheduled range (up to {self.schedule.n_max})")
        object.__setattr__(self, "n_max", top)

    @property
    def r(self) -> float:
        return self.schedule.r

    @property
    def ns(self) -> range:
        return range(self.schedule.n0, self.n_max + 1)

    def half_height(self, n: int) -> float:
        e = schedule_entry(self.schedule, n)
        return e.height if self.variant == "g" else 1.0 / n**4

    def amplitude(self, n: int) -> float:
        if self.variant == "g":
            return schedule_entry(self.schedule, n).kick
        return math.exp(-math.log(n) ** 2)

    def region_row(self, n: int) -> np.ndarray:
        e = schedule_entry(self.schedule, n)
        return np.array([n, e.a, e.b, e.ell, e.N, self.amplitude(n), self.half_height(n)], dtype=float)

    def engine_config(self) -> np.ndarray:
        p = self.params
        head = [p.kappa, LAM_LOG, float(p.L), float(VARIANTS[self.variant])]
        if self.variant == "none":
            return np.array(head + [0.0])
        rows = [self.region_row(n) for n in self.ns]
        return np.concatenate([np.array(head + [float(len(rows))])] + rows)

    def without_perturbation(self) -> PerturbedMapConfig:
        return PerturbedMapConfig(self.params, self.schedule, "none", self.n_max)


class RegionHit(NamedTuple):
    n: int
    corner: int


def chart_point(p, i: int) -> np.ndarray:
    """Corner-chart coordinates of p with respect to corner i."""
    return eng.SCALE * (tau_inv(i, p) + 0.5)


def from_chart(q, i: int) -> np.ndarray:
    return tau(i, np.asarray(q, dtype=float) / eng.SCALE - 0.5)


def _in_box(q, cfg: PerturbedMapConfig, n: int) -> bool:
    e = schedule_entry(cfg.schedule, n)
    return e.a <= q[0] <= e.b and abs(q[1]) <= cfg.half_height(n)


def region_of(p, cfg: PerturbedMapConfig) -> RegionHit | None:
    """The region (n, corner) whose rectangle contains p, if any."""
    if cfg.variant == "none":
        return None
    for i in range(4):
        q = chart_point(p, i)
        for n in cfg.ns:
            if _in_box(q, cfg, n):
                return RegionHit(n, i)
    return None


def _wiggle(q, n: int, cfg: PerturbedMapConfig, variant: str):
    if cfg.variant != variant:
        raise ValueError(f"config variant is {cfg.variant!r}, not {variant!r}")
    if n not in cfg.ns:
        raise ValueError(f"n={n} outside the active range {cfg.ns.start}..{cfg.ns.stop - 1}")
    X, Y = float(q[0]), float(q[1])
    if not _in_box((X, Y), cfg, n):
        raise ValueError(f"chart point {(X, Y)} is outside the support of region {n}")
    return eng.wiggle(VARIANTS[variant], cfg.region_row(n), X, Y)


def g(q, n: int, cfg: PerturbedMapConfig) -> np.ndarray:
    """The upward wiggle on region n, in chart coordinates."""
    d, _, _ = _wiggle(q, n, cfg, "g")
    return np.array([float(q[0]), float(q[1]) + d])


def gbar(q, n: int, cfg: PerturbedMapConfig) -> np.ndarray:
    """The signed cosine wiggle on region n, in chart coordinates."""
    d, _, _ = _wiggle(q, n, cfg, "gbar")
    return np.array([float(q[0]), float(q[1]) + d])


def wiggle_jacobian(q, n: int, cfg: PerturbedMapConfig) -> np.ndarray:
    """Analytic derivative of g (or gbar) at the chart point q."""
    _, gx, gy = _wiggle(q, n, cfg, cfg.variant)
    return np.array([[1.0, 0.0], [gx, gy]])


def f_perturbed(p, cfg: PerturbedMapConfig) -> np.ndarray:
    """f0 after the wiggle of whichever region contains p."""
    return map_step(p, cfg.engine_config())[0]


def df_perturbed(p, v, cfg: PerturbedMapConfig) -> np.ndarray:
    return map_step(p, cfg.engine_config(), v)[1]


def perturbed_jacobian(p, cfg: PerturbedMapConfig):
    return map_jacobian(p, cfg.engine_config())


# ---------------------------------------------------------------------------
# derivative bound and C^r distance
# ---------------------------------------------------------------------------


def displacement(X, Y, n: int, cfg: PerturbedMapConfig):
    """Vectorized vertical displacement and its X-derivative on region n.

    Arrays outside the rectangle get zero displacement.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    e = schedule_entry(cfg.schedule, n)
    amp = cfg.amplitude(n)
    if cfg.variant == "g":
        c, cy = e.N / e.ell, e.N / e.ell
    else:
        c, cy = 10.0 * n**4, float(n**4)
    u1, u2, w = c * (X - e.a), c * (e.b - X), cy * Y
    A1, A2 = psi_array(1.0 - u1), psi_array(1.0 - u2)
    dA1, dA2 = -dpsi_array(1.0 - u1), -dpsi_array(1.0 - u2)
    B = psi_array(2.0 * np.abs(w) - 1.0)
    cut = A1 * A2 * B
    dcut = c * (dA1 * A2 - A1 * dA2) * B
    if cfg.variant == "g":
        wave = 2.0 + np.sin(math.pi * u1)
        dwave = math.pi * c * np.cos(math.pi * u1)
    else:
        om = 10.0 * math.pi * n**4
        wave = np.cos(om * X)
        dwave = -om * np.sin(om * X)
    inside = (X >= e.a) & (X <= e.b) & (np.abs(Y) <= cfg.half_height(n))
    d = np.where(inside, amp * cut * wave, 0.0)
    dx = np.where(inside, amp * (dcut * wave + cut * dwave), 0.0)
    return d, dx


@dataclass
class MajderReport:
    max_ratio: float
    location: tuple[float, float]
    n: int
    r: float
    samples: int
    passed: bool


def majder_ratio(X, Y, n: int, cfg: PerturbedMapConfig):
    """|d f_2/dX| / |f_2|^(1 - 1/r) in chart units; 0 where the cutoff vanishes.

    On the corner f0 is diag(1/K, 6/5) in chart units, so ``f_2 = 6/5 (Y + d)``
    and ``df_2/dX = 6/5 dd/dX``.
    """
    d, dx = displacement(X, Y, n, cfg)
    f2 = LAMBDA * (np.asarray(Y, dtype=float) + d)
    num = LAMBDA * np.abs(dx)
    expo = 1.0 - 1.0 / cfg.r
    den = np.abs(f2) ** expo
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num == 0.0, 0.0, num / den)
    return ratio


def check_majder(cfg: PerturbedMapConfig, points=None, n: int | None = None,
                 samples: int = 100_000, seed: int = 0) -> MajderReport:
    """Scan the derivative bound |df_2/dx| <= f_2^(1-1/r) over region n.

    ``points`` is an (m, 2) array of chart points; by default ``samples``
    uniform points of the rectangle are drawn from a Philox stream.
    """
    n = cfg.schedule.n0 if n is None else n
    e = schedule_entry(cfg.schedule, n)
    h = cfg.half_height(n)
    if points is None:
        rng = np.random.Generator(np.random.Philox(seed))
        pts = np.column_stack([rng.uniform(e.a, e.b, samples), rng.uniform(-h, h, samples)])
    else:
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
    ratio = majder_ratio(pts[:, 0], pts[:, 1], n, cfg)
    k = int(np.argmax(ratio))
    best = float(ratio[k])
    return MajderReport(best, (float(pts[k, 0]), float(pts[k, 1])), n, cfg.r, len(pts), best <= 1.0)


@dataclass
class CrProxy:
    n: int
    order_max: list[float]  # max |partial derivative| of each order
    holder: float | None  # difference quotient of the top order, non-integer r only
    norm: float
    amplitude_bound: float  # 3 * amplitude, the order-0 ceiling


def _local_scales(n: int, cfg: PerturbedMapConfig):
    """(cx, cy, width, phase): X = a_n + u / cx, Y = w / cy, u in [0, width]."""
    e = schedule_entry(cfg.schedule, n)
    if cfg.variant == "g":
        return e.N / e.ell, e.N / e.ell, float(e.N), 0.0
    c = 10.0 * n**4
    return c, float(n**4), c * e.ell, 10.0 * math.pi * n**4 * e.a


def _local_displacement(u, w, n: int, cfg: PerturbedMapConfig, width: float, phase: float):
    cut = psi_array(1.0 - u) * psi_array(1.0 - (width - u)) * psi_array(2.0 * np.abs(w) - 1.0)
    if cfg.variant == "g":
        wave = 2.0 + np.sin(math.pi * u)
    else:
        wave = np.cos(phase + math.pi * u)
    return cfg.amplitude(n) * cut * wave


def _windows(width: float) -> list[tuple[float, float]]:
    # the plateau is periodic in u with period 2, so two edges plus one
    # interior period cover every local shape
    if width <= 12.0:
        return [(0.0, width)]
    mid = 2.0 * math.floor(width / 4.0)
    return [(0.0, 4.0), (mid - 2.0, mid + 2.0), (width - 4.0, width)]


def _mixed_partials(F: np.ndarray, du: float, dw: float, cx: float, cy: float, order: int) -> list[float]:
    """Max absolute mixed partials in chart units of each order 0..order."""
    out = [float(np.max(np.abs(F)))]
    level = [(F, 0)]  # (array, number of w-derivatives taken)
    for s in range(1, order + 1):
        nxt = [(np.gradient(G, du, axis=1), j) for G, j in level]
        G, j = level[-1]
        nxt.append((np.gradient(G, dw, axis=0), j + 1))
        level = nxt
        out.append(max(float(np.max(np.abs(G))) * cx ** (s - j) * cy**j for G, j in level))
    return out


def cr_distance_trend(cfg: PerturbedMapConfig, ns=None, points_per_unit: int = 48,
                      nw: int = 97, holder_scale: float = 1e-4) -> list[CrProxy]:
    """Finite-difference C^r size of g - id on each region.

    Orders up to ``ceil(r)`` are scanned for integer ``r``. For non-integer
    ``r`` the orders stop at ``floor(r)`` and the fractional part is replaced
    by a difference quotient of the top X-derivative at ``holder_scale``
    (chart units). Differences are taken in the local wiggle coordinates
    so that regions far below double resolution in X are still resolved.
    """
    ns = list(cfg.ns if ns is None else ns)
    r = cfg.r
    top = int(math.floor(r))
    frac = r - top
    orders_to = top if frac > 0 else int(math.ceil(r))
    out = []
    for n in ns:
        cx, cy, width, phase = _local_scales(n, cfg)
        ws = np.linspace(-1.0, 1.0, nw)
        best = [0.0] * (orders_to + 1)
        holder = 0.0 if frac > 0 else None
        for lo, hi in _windows(width):
            us = np.linspace(lo, hi, int(points_per_unit * (hi - lo)) + 1)
            UU, WW = np.meshgrid(us, ws)
            F = _local_displacement(UU, WW, n, cfg, width, phase)
            du, dw = us[1] - us[0], ws[1] - ws[0]
            best = [max(b, v) for b, v in zip(best, _mixed_partials(F, du, dw, cx, cy, orders_to))]
            if frac > 0:
                G = F
                for _ in range(top):
                    G = np.gradient(G, du, axis=1)
                G = G * cx**top
                shift = int(round(holder_scale * cx / du))
                if 1 <= shift < G.shape[1]:
                    dq = np.max(np.abs(G[:, shift:] - G[:, :-shift])) / holder_scale**frac
                else:
                    # scale beyond the window: bound the quotient by the oscillation
                    dq = float(np.max(G) - np.min(G)) / holder_scale**frac
                holder = max(holder, float(dq))
        norm = max(best + ([holder] if holder is not None else []))
        out.append(CrProxy(n, best, holder, norm, 3.0 * cfg.amplitude(n)))
    return out
