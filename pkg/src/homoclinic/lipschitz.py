"""Bi-Lipschitz surface maps assembled from scaled model horseshoes on disjoint disks.

A model horseshoe lives on the unit disk and is the identity outside radius
1/2. Its core is the piecewise-linear fold ``(x, y) -> (-y - phi(x), x)``
with the tent ``phi(x) = a|x| - 1``; for ``a >= 3`` every sign sequence is
realized by exactly one orbit, so the core carries a full two-symbol
shift. The core sits in a small box that a rigid rotation cycles through
``p`` disjoint positions, so the model has entropy ``log 2 / p`` (natural
log throughout). Rotations are switched off with logarithmic twist
profiles, which keep the shear part of the derivative constant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .entropy import EntropyEstimate, entropy_estimate

LOG2 = math.log(2.0)
BILIP_BUDGET = 10.0


# ---------------------------------------------------------------------------
# building blocks, all vectorized over trailing (..., 2) arrays
# ---------------------------------------------------------------------------


def _ramp(t, inner: float, width: float):
    """1 on |t| <= inner, linear down to 0 at |t| = inner + width."""
    return np.clip((inner + width - np.abs(t)) / width, 0.0, 1.0)


def _ramp_slope(t, inner: float, width: float):
    a = np.abs(t)
    return np.where((a > inner) & (a < inner + width), -np.sign(t) / width, 0.0)


def _twist_angle(r, angle: float, r_rigid: float, r_out: float):
    """Rotation angle: ``angle`` inside r_rigid, zero beyond r_out, log-linear between."""
    rr = np.maximum(r, 1e-300)
    mid = angle * np.log(r_out / rr) / math.log(r_out / r_rigid)
    return np.where(r <= r_rigid, angle, np.where(r >= r_out, 0.0, mid))


def twist(p, angle: float, r_rigid: float, r_out: float, inverse: bool = False):
    p = np.asarray(p, dtype=float)
    x, y = p[..., 0], p[..., 1]
    r = np.hypot(x, y)  # twists preserve r, so the inverse uses the same angle
    om = _twist_angle(r, angle, r_rigid, r_out)
    if inverse:
        om = -om
    c, s = np.cos(om), np.sin(om)
    return np.stack([c * x - s * y, s * x + c * y], axis=-1)


@dataclass(frozen=True)
class FoldCore:
    """The fold in its own units: support square half-width ``plateau + ramp``."""

    slope: float = 4.0
    plateau: float = 0.55
    ramp: float = 30.0

    def __post_init__(self):
        if self.slope < 3.0:
            raise ValueError("fold slope below 3 does not give a full two-symbol shift")
        if not self.plateau > 1.0 / (self.slope - 2.0):
            raise ValueError("plateau must contain the invariant set |x| <= 1/(a-2)")

    @property
    def peak(self) -> float:
        return self.slope * self.plateau - 1.0

    @property
    def half_width(self) -> float:
        return self.plateau + self.ramp

    def profile(self, x):
        """phi(x) = a|x| - 1 on the plateau, then linearly back to 0."""
        x = np.asarray(x, dtype=float)
        core = self.slope * np.abs(x) - 1.0
        outer = self.peak * _ramp(np.abs(x) - self.plateau, 0.0, self.ramp)
        return np.where(np.abs(x) <= self.plateau, core, outer)

    def shear(self, p, inverse: bool = False):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        phi = self.profile(x)
        if not inverse:
            return np.stack([x, y + _ramp(y, self.plateau, self.ramp) * phi], axis=-1)
        # y -> y + c(y) phi is increasing; solve piecewise on the linear pieces of c
        out = y.copy()
        lo, hi = self.plateau, self.half_width
        inside = np.abs(y - phi) <= lo
        out = np.where(inside, y - phi, out)
        for sgn in (1.0, -1.0):
            # on sgn*t in (lo, hi): t + (hi - sgn*t)/ramp * phi = y
            t = (y - hi * phi / self.ramp) / (1.0 - sgn * phi / self.ramp)
            ok = ~inside & (sgn * t > lo) & (sgn * t < hi)
            out = np.where(ok, t, out)
        return np.stack([x, out], axis=-1)

    def fold(self, p):
        """Rigid core map: (x, y) -> (-y - phi(x), x)."""
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        return np.stack([-y - self.profile(x), x], axis=-1)


def periodic_words(m: int) -> np.ndarray:
    """All sign words of length m, shape (2**m, m), entries +-1."""
    bits = (np.arange(2**m)[:, None] >> np.arange(m)[None, :]) & 1
    return 2.0 * bits - 1.0


def fold_periodic_orbit(signs, slope: float) -> np.ndarray:
    """The m-periodic sequence x with x[n+1] + x[n-1] + a*s[n]*x[n] = 1.

    Raises if a solution has the wrong sign somewhere (no orbit with that word).
    """
    s = np.asarray(signs, dtype=float)
    m = len(s)
    M = np.diag(slope * s)
    idx = np.arange(m)
    M[idx, (idx + 1) % m] += 1.0
    M[idx, (idx - 1) % m] += 1.0
    x = np.linalg.solve(M, np.ones(m))
    if np.any(s * x <= 0):
        raise ValueError("sign word not realized by an orbit")
    return x


# ---------------------------------------------------------------------------
# model horseshoe on the unit disk
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelHorseshoe:
    """Fold core cycled through ``period`` boxes; entropy ``log 2 / period``."""

    index: int
    target: float
    period: int
    core: FoldCore = field(default_factory=FoldCore)
    twist_ratio: float = 2.5  # r_out / r_rigid of every twist
    radius: float = 0.5

    def __post_init__(self):
        if self.period < 1:
            raise ValueError("period must be >= 1")

    @property
    def entropy(self) -> float:
        return LOG2 / self.period

    # geometry ---------------------------------------------------------------
    @property
    def _global_rigid(self) -> float:
        return self.radius / self.twist_ratio if self.period > 1 else self.radius

    @property
    def _offset(self) -> float:
        """Distance of the fold box centre from the model centre."""
        if self.period == 1:
            return 0.0
        return self._global_rigid / (1.0 + math.sin(math.pi / self.period))

    @property
    def _local_radius(self) -> float:
        """Radius of the disk carrying the fold and its 90-degree twist."""
        if self.period == 1:
            return self._global_rigid
        return 0.95 * self._offset * min(1.0, math.sin(math.pi / self.period))

    @property
    def scale(self) -> float:
        """Model units per fold unit."""
        local_rigid = self._local_radius / self.twist_ratio
        return local_rigid / (math.sqrt(2.0) * self.core.half_width)

    @property
    def centre(self) -> np.ndarray:
        return np.array([self._offset, 0.0])

    def to_core(self, p):
        return (np.asarray(p, dtype=float) - self.centre) / self.scale

    def from_core(self, q):
        return self.centre + self.scale * np.asarray(q, dtype=float)

    # map --------------------------------------------------------------------
    def _local(self, p, inverse: bool):
        """Fold shear followed by the quarter-turn twist around the box centre."""
        p = np.asarray(p, dtype=float)
        q = p - self.centre
        lr = self._local_radius
        far = np.hypot(q[..., 0], q[..., 1]) >= lr  # untouched; skip the round trip through q
        if not inverse:
            sq = self.scale * self.core.shear(q / self.scale)
            near = np.max(np.abs(q), axis=-1) <= self.scale * self.core.half_width
            q = np.where(near[..., None], sq, q)
            q = twist(q, math.pi / 2, lr / self.twist_ratio, lr)
        else:
            q = twist(q, math.pi / 2, lr / self.twist_ratio, lr, inverse=True)
            sq = self.scale * self.core.shear(q / self.scale, inverse=True)
            near = np.max(np.abs(q), axis=-1) <= self.scale * self.core.half_width
            q = np.where(near[..., None], sq, q)
        return np.where(far[..., None], p, q + self.centre)

    def __call__(self, p):
        p = np.asarray(p, dtype=float)
        out = self._local(p, inverse=False)
        if self.period > 1:
            out = twist(out, 2 * math.pi / self.period, self._global_rigid, self.radius)
        return out

    def inverse(self, p):
        p = np.asarray(p, dtype=float)
        if self.period > 1:
            p = twist(p, 2 * math.pi / self.period, self._global_rigid, self.radius, inverse=True)
        return self._local(p, inverse=True)

    def periodic_points(self, m: int) -> tuple[np.ndarray, float]:
        """Start points (model units) of the 2**m fold orbits of period m.

        Also returns the smallest |x| met along those orbits, in model units:
        orbits whose sign words differ at some step are at least twice that
        far apart at that step.
        """
        pts, gap = [], math.inf
        for w in periodic_words(m):
            x = fold_periodic_orbit(w, self.core.slope)
            gap = min(gap, float(np.min(np.abs(x))))
            pts.append(self.from_core((x[0], x[-1])))
        return np.array(pts), gap * self.scale


def build_model(h_target: float, index: int = 1, tol: float = 0.05, **kw) -> ModelHorseshoe:
    """Model whose entropy log 2 / p is the closest available value to ``h_target``."""
    if not 0.0 < h_target < 1.0:
        raise ValueError("target entropy must lie in (0, 1)")
    p = max(1, round(LOG2 / h_target))
    model = ModelHorseshoe(index, h_target, p, **kw)
    if abs(model.entropy - h_target) > tol:
        raise ValueError(
            f"target {h_target:.4f} unreachable: nearest realizable value is {model.entropy:.4f}")
    return model


# ---------------------------------------------------------------------------
# disks and the patched map
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DiskFamily:
    centres: np.ndarray
    radii: np.ndarray
    domain: tuple[float, float, float, float] = (0.0, 1.0, 0.0, 1.0)  # xmin, xmax, ymin, ymax

    def __post_init__(self):
        c = np.asarray(self.centres, dtype=float).reshape(-1, 2)
        r = np.asarray(self.radii, dtype=float).ravel()
        object.__setattr__(self, "centres", c)
        object.__setattr__(self, "radii", r)
        if len(c) != len(r) or len(r) == 0:
            raise ValueError("need one radius per centre")
        if np.any(r <= 0):
            raise ValueError("radii must be positive")
        x0, x1, y0, y1 = self.domain
        if np.any(c[:, 0] - r < x0) or np.any(c[:, 0] + r > x1) or \
                np.any(c[:, 1] - r < y0) or np.any(c[:, 1] + r > y1):
            raise ValueError("disks must lie inside the chart domain")
        for i in range(len(r)):
            for j in range(i + 1, len(r)):
                if np.hypot(*(c[i] - c[j])) <= r[i] + r[j]:
                    raise ValueError(f"disks {i} and {j} intersect")

    @property
    def size(self) -> int:
        return len(self.radii)

    @classmethod
    def geometric(cls, m: int = 8, rho0: float = 0.25):
        """Disks of radius rho0 / 2**i (i = 1..m) marching along the diagonal of the unit square."""
        radii = rho0 / 2.0 ** np.arange(1, m + 1)
        centres, pos = [], 0.05
        for r in radii:
            pos += r
            centres.append((pos, pos))
            pos += r * 1.25
        return cls(np.array(centres), radii)


@dataclass(frozen=True)
class PatchedMap:
    family: DiskFamily
    models: tuple[ModelHorseshoe, ...]
    mode: str

    def __post_init__(self):
        if self.mode not in ("increasing", "constant"):
            raise ValueError("mode must be 'increasing' or 'constant'")
        if len(self.models) != self.family.size:
            raise ValueError("one model per disk")

    def disk_of(self, p) -> np.ndarray:
        """Index of the disk containing each point, -1 outside all disks."""
        p = np.asarray(p, dtype=float).reshape(-1, 2)
        out = np.full(len(p), -1)
        for i, (c, r) in enumerate(zip(self.family.centres, self.family.radii)):
            out[np.hypot(p[:, 0] - c[0], p[:, 1] - c[1]) <= r] = i
        return out

    def _apply(self, p, inverse: bool):
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, 2)
        out = flat.copy()
        which = self.disk_of(flat)
        for i, (c, r, mdl) in enumerate(zip(self.family.centres, self.family.radii, self.models)):
            sel = which == i
            if np.any(sel):
                u = (flat[sel] - c) / r
                out[sel] = c + r * (mdl.inverse(u) if inverse else mdl(u))
        return out.reshape(p.shape)

    def __call__(self, p):
        return self._apply(p, inverse=False)

    def inverse(self, p):
        return self._apply(p, inverse=True)


def patch(family: DiskFamily, mode: str = "increasing", targets=None, **kw) -> PatchedMap:
    """Patched map with one model per disk.

    Default targets: ``log 2 / p`` for p = m, m-1, ..., 1 (strictly
    increasing) or ``log 2 / 2`` on every disk (constant).
    """
    m = family.size
    if targets is None:
        if mode == "increasing":
            targets = [LOG2 / (m - i) for i in range(m)]
        else:
            targets = [LOG2 / 2] * m
    if len(targets) != m:
        raise ValueError("one target per disk")
    models = tuple(build_model(h, i + 1, **kw) for i, h in enumerate(targets))
    if mode == "increasing" and any(b.entropy <= a.entropy for a, b in zip(models, models[1:])):
        raise ValueError("targets do not give strictly increasing entropies")
    return PatchedMap(family, models, mode)


def evaluate(fmap: PatchedMap, p):
    return fmap(p)


# ---------------------------------------------------------------------------
# bi-Lipschitz sampling
# ---------------------------------------------------------------------------

STRATA = ("outside", "in_out", "same_disk", "cross_disk")


@dataclass
class BiLipReport:
    lip: float
    lip_inverse: float
    per_stratum: dict  # stratum -> (max forward ratio, max inverse ratio, pairs)
    pairs: int

    @property
    def bilip(self) -> float:
        return self.lip + self.lip_inverse


def _ratios(fmap, x, y):
    d0 = np.linalg.norm(x - y, axis=-1)
    d1 = np.linalg.norm(fmap(x) - fmap(y), axis=-1)
    keep = d0 > 0
    return d1[keep] / d0[keep], d0[keep] / d1[keep]


def _in_disk(rng, c, r, k, rmin=0.0, rmax=1.0):
    rad = r * np.sqrt(rng.uniform(rmin**2, rmax**2, k))
    th = rng.uniform(0, 2 * math.pi, k)
    return c + np.stack([rad * np.cos(th), rad * np.sin(th)], axis=-1)


def _outside(rng, fam: DiskFamily, k):
    x0, x1, y0, y1 = fam.domain
    pts = np.empty((0, 2))
    while len(pts) < k:
        cand = np.stack([rng.uniform(x0, x1, 2 * k), rng.uniform(y0, y1, 2 * k)], axis=-1)
        d = np.hypot(cand[:, None, 0] - fam.centres[None, :, 0], cand[:, None, 1] - fam.centres[None, :, 1])
        pts = np.vstack([pts, cand[np.all(d > fam.radii[None, :], axis=1)]])
    return pts[:k]


def bilip_estimate(fmap, pairs: int = 100_000, seed: int = 0) -> BiLipReport:
    """Max forward and inverse distance ratios over stratified random pairs.

    ``fmap`` is a PatchedMap or any vectorized callable on the unit square
    (then only the 'outside' stratum, uniform pairs, is sampled).
    """
    if pairs < 10_000:
        raise ValueError("pair budget must be at least 1e4")
    rng = np.random.Generator(np.random.Philox(seed))
    if not isinstance(fmap, PatchedMap):
        x = rng.uniform(0, 1, (pairs, 2))
        y = rng.uniform(0, 1, (pairs, 2))
        f, b = _ratios(fmap, x, y)
        return BiLipReport(float(f.max()), float(b.max()), {"outside": (float(f.max()), float(b.max()), pairs)}, pairs)
    fam = fmap.family
    share = pairs // len(STRATA)
    per = {}
    # outside: both points in the identity set
    x, y = _outside(rng, fam, share), _outside(rng, fam, share)
    per["outside"] = _ratios(fmap, x, y)
    # in_out: one point in a disk (half near its rim), the other outside
    idx = rng.integers(0, fam.size, share)
    near_rim = rng.uniform(size=share) < 0.5
    xs = np.array([_in_disk(rng, fam.centres[i], fam.radii[i], 1, 0.9 if nr else 0.0)[0]
                   for i, nr in zip(idx, near_rim)])
    ys = _outside(rng, fam, share)
    per["in_out"] = _ratios(fmap, xs, ys)
    # same disk: a mix of close pairs around the fold box and far pairs
    idx = rng.integers(0, fam.size, share)
    xs = np.empty((share, 2))
    ys = np.empty((share, 2))
    for i in range(fam.size):
        sel = np.flatnonzero(idx == i)
        k = len(sel)
        if k == 0:
            continue
        c, r, mdl = fam.centres[i], fam.radii[i], fmap.models[i]
        a = _in_disk(rng, c, r, k)
        close = rng.uniform(size=k) < 0.5
        box = c + r * mdl.from_core(rng.uniform(-mdl.core.half_width, mdl.core.half_width, (k, 2)))
        a = np.where((rng.uniform(size=k) < 0.5)[:, None], box, a)
        b = np.where(close[:, None], a + r * mdl.scale * rng.normal(0, 1.0, (k, 2)), _in_disk(rng, c, r, k))
        # redraw partners that left the disk or coincide with a, so every pair counts
        bad = (np.hypot(*(b - c).T) > r) | np.all(b == a, axis=1)
        while bad.any():
            m = int(bad.sum())
            b[bad] = a[bad] + r * mdl.scale * rng.normal(0, 1.0, (m, 2))
            bad = (np.hypot(*(b - c).T) > r) | np.all(b == a, axis=1)
        xs[sel], ys[sel] = a, b
    per["same_disk"] = _ratios(fmap, xs, ys)
    # cross disk: points in two different disks
    i1 = rng.integers(0, fam.size, share)
    i2 = (i1 + rng.integers(1, max(2, fam.size), share)) % fam.size
    xs = np.array([_in_disk(rng, fam.centres[i], fam.radii[i], 1)[0] for i in i1])
    ys = np.array([_in_disk(rng, fam.centres[i], fam.radii[i], 1)[0] for i in i2])
    per["cross_disk"] = _ratios(fmap, xs, ys)
    table = {k: (float(f.max()), float(b.max()), int(f.size)) for k, (f, b) in per.items()}
    lip = max(v[0] for v in table.values())
    lip_inv = max(v[1] for v in table.values())
    return BiLipReport(lip, lip_inv, table, sum(v[2] for v in table.values()))


# ---------------------------------------------------------------------------
# entropy per disk
# ---------------------------------------------------------------------------


@dataclass
class DiskEntropy:
    index: int
    target: float
    realized: float
    estimate: EntropyEstimate


def per_disk_entropy(fmap: PatchedMap, i: int, word_length: int = 12, blocks: int = 6) -> DiskEntropy:
    """Separated-set slope inside disk ``i`` (0-based).

    Samples are the start points of the fold's period-``word_length``
    orbits; horizons are 1 + p*k for k = 1..blocks with p the cycle length
    of the model, so each horizon reveals whole symbols.
    """
    if not 0 <= i < fmap.family.size:
        raise ValueError(f"no disk {i}")
    if blocks + 2 > word_length:
        raise ValueError("word_length must exceed blocks + 2 to avoid saturation")
    c, r, mdl = fmap.family.centres[i], fmap.family.radii[i], fmap.models[i]
    pts, gap = mdl.periodic_points(word_length)
    samples = c + r * pts
    eps = r * gap
    ns = [1 + mdl.period * k for k in range(1, blocks + 1)]
    est = entropy_estimate(fmap, [eps], ns, samples)
    return DiskEntropy(i, mdl.target, est.slopes[0], est)


def complement_entropy(fmap: PatchedMap, samples: int = 500, n_grid=(5, 10, 20), seed: int = 0) -> float:
    """Separated-set slope for points outside every disk (identity there)."""
    rng = np.random.Generator(np.random.Philox(seed))
    pts = _outside(rng, fmap.family, samples)
    est = entropy_estimate(fmap, [0.01], list(n_grid), pts)
    return est.slopes[0]
