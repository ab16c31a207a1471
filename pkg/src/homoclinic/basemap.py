"""The homoclinic base map f0: parameters, field, flow, time-1 map and tangent map.

The disk ``D`` has radius 2. The four affine corners are ``tau_i(C0)`` with
``C0 = [-1/2, -5/12]^2`` and ``tau_i`` the rotation by ``-i * 90`` degrees;
on each corner f0 is conjugate to ``diag(1/K, 6/5)`` around the vertex.
Kernels live in :mod:`homoclinic.field`; long orbits go through the
log-coordinate engine in :mod:`homoclinic.engine`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import engine as eng
from .field import H_STEP, a0_val, field_vals, radial_val, rk4_flow, slow_val, x0_val
from .smooth import LAMBDA

LAM_LOG = math.log(LAMBDA)

# tau_i as matrices acting on column vectors: tau_i = ROT[i] @ p
ROT = np.array(
    [
        [[1.0, 0.0], [0.0, 1.0]],
        [[0.0, 1.0], [-1.0, 0.0]],
        [[-1.0, 0.0], [0.0, -1.0]],
        [[0.0, -1.0], [1.0, 0.0]],
    ]
)


class StepSizeUnderflow(RuntimeError):
    pass


class TransitionBudgetExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class Params:
    """Corner contraction K, slowdown factor L; the expansion is fixed to 6/5."""

    K: float = 50.0
    L: float = 20.0
    K_floor: float = 20.0

    def __post_init__(self):
        if not self.K > self.K_floor:
            raise ValueError(f"K={self.K} must exceed the floor {self.K_floor}")
        if self.L < 1:
            raise ValueError("L must be >= 1")

    @property
    def lam(self) -> float:
        return LAMBDA

    @property
    def kappa(self) -> float:
        return math.log(self.K)

    @property
    def lam_log(self) -> float:
        return LAM_LOG

    def engine_config(self) -> np.ndarray:
        """Engine configuration for the unperturbed map."""
        return np.array([self.kappa, LAM_LOG, float(self.L), eng.VAR_NONE, 0.0])


def tau(i: int, p):
    """Apply the rotation tau_i to a point or vector."""
    return ROT[i % 4] @ np.asarray(p, dtype=float)


def tau_inv(i: int, p):
    return ROT[i % 4].T @ np.asarray(p, dtype=float)


# ---------------------------------------------------------------------------
# Python-level API
# ---------------------------------------------------------------------------


def _check_disk(p):
    x, y = float(p[0]), float(p[1])
    if x * x + y * y > 4.0 + 1e-12:
        raise ValueError(f"point {p} lies outside the disk of radius 2")
    return x, y


def _check_strip_x(x):
    if not -0.5 <= x <= 0.5:
        raise ValueError(f"x={x} outside [-1/2, 1/2]")


def X0(x: float, params: Params) -> float:
    _check_strip_x(x)
    return x0_val(float(x), params.kappa, LAM_LOG)


def A0(x: float, params: Params) -> float:
    _check_strip_x(x)
    return a0_val(float(x), params.kappa, LAM_LOG)


def alpha_L(x: float, y: float, params: Params) -> float:
    """Support-and-slowdown factor of the bottom-strip field."""
    return slow_val(float(x), float(params.L)) * radial_val(float(x), float(y))


def field(p, params: Params):
    """Return (V(p), DV(p)) as numpy arrays."""
    x, y = _check_disk(p)
    f1, f2, j11, j12, j21, j22 = field_vals(x, y, params.kappa, LAM_LOG, float(params.L))
    return np.array([f1, f2]), np.array([[j11, j12], [j21, j22]])


def flow(p, t: float, params: Params, tol: float = 1e-9, adaptive: bool = False,
         h: float = H_STEP, h_min: float = 2.0**-24, with_jacobian: bool = False,
         refine: bool = True):
    """Integrate dp/dt = V(p) for time t with fixed-step RK4.

    Coarse steps of size ``h`` are split 256-fold wherever they may touch one
    of the steep blend strips (``refine=False`` disables this).

    With ``adaptive=True`` the step is halved until two successive answers
    differ by less than ``tol * max(1, |t|)``.
    """
    x, y = _check_disk(p)
    if t == 0:
        return (np.array([x, y]), np.eye(2)) if with_jacobian else np.array([x, y])
    args = (params.kappa, LAM_LOG, float(params.L))
    n = max(1, int(math.ceil(abs(t) / h)))
    xa, ya, J = rk4_flow(x, y, float(t), n, *args, refine)
    if adaptive:
        while True:
            n *= 2
            if abs(t) / n < h_min:
                raise StepSizeUnderflow(f"step below {h_min} without reaching tol={tol}")
            xb, yb, Jb = rk4_flow(x, y, float(t), n, *args, refine)
            done = math.hypot(xb - xa, yb - ya) < tol * max(1.0, abs(t))
            xa, ya, J = xb, yb, Jb
            if done:
                break
    q = np.array([xa, ya])
    return (q, J) if with_jacobian else q


def corner_index(p) -> int:
    """Index i with p in tau_i(C0) (closed), or -1."""
    for i in range(4):
        u = tau_inv(i, p)
        if -0.5 <= u[0] <= -5.0 / 12.0 and -0.5 <= u[1] <= -5.0 / 12.0:
            return i
    return -1


def affine_corner(p, params: Params):
    """The exact corner formula conjugated to whichever corner holds p."""
    i = corner_index(p)
    if i < 0:
        raise ValueError("point is not in an affine corner")
    u = tau_inv(i, p)
    w = np.array([(u[0] + 0.5) / params.K - 0.5, LAMBDA * (u[1] + 0.5) - 0.5])
    return tau(i, w)


# ---------------------------------------------------------------------------
# time-1 map through the orbit engine
# ---------------------------------------------------------------------------


def as_engine_config(map_cfg) -> np.ndarray:
    """Engine array for Params, a perturbed-map config or an engine array."""
    if isinstance(map_cfg, np.ndarray):
        return map_cfg
    return map_cfg.engine_config()


def map_step(p, map_cfg, v=(1.0, 0.0)):
    """One iterate of the map (Params, perturbed config or engine array): (image, image of v)."""
    cfg = as_engine_config(map_cfg)
    x, y = _check_disk(p)
    vx, vy = float(v[0]), float(v[1])
    nrm = math.hypot(vx, vy)
    st, tv = eng.init_state(x, y, vx, vy)
    g = eng.step(st, tv, cfg)
    q = np.array(eng.state_xy(st))
    w = np.array(eng.tangent_xy(st, tv))
    scale = nrm * math.exp(g) if nrm > 0 else 0.0
    return q, w * scale


def map_jacobian(p, cfg):
    """Image of p and the 2x2 derivative of one iterate."""
    q, c1 = map_step(p, cfg, (1.0, 0.0))
    _, c2 = map_step(p, cfg, (0.0, 1.0))
    return q, np.column_stack([c1, c2])


def f0(p, params: Params) -> np.ndarray:
    """Time-1 map of the field (exact affine formula inside the corners)."""
    return map_step(p, params.engine_config())[0]


def df0(p, v, params: Params) -> np.ndarray:
    """Derivative of f0 at p applied to v."""
    return map_step(p, params.engine_config(), v)[1]


def _run_until_corner(st, tv, cfg, target: int, budget: int) -> int:
    for k in range(1, budget + 1):
        eng.step(st, tv, cfg)
        eng.prepare(st, tv)
        c, _, _, _ = eng.corner_view(st, tv)
        if c == target:
            return k
    raise TransitionBudgetExceeded(f"no entry into corner {target} within {budget} iterates")


def transition_time(p, params: Params, budget: int = 100000) -> int:
    """First n >= 1 with f0^n(p) in tau_1(C0), for p in f0(C0) minus C0."""
    x, y = _check_disk(p)
    if not (-0.5 <= x <= -0.5 + 1.0 / (12.0 * params.K) and -5.0 / 12.0 < y <= -0.4):
        raise ValueError("p must lie in f0(C0) minus C0")
    st, tv = eng.init_state(x, y, 1.0, 0.0)
    return _run_until_corner(st, tv, params.engine_config(), 1, budget)


def edge_state(x1: float, x2: float):
    """Engine state for the point (x1 - 1/2, x2) next to the left edge.

    ``x1`` is the distance to the edge and is stored as its logarithm, so
    arbitrarily small values keep full relative precision.
    """
    st = np.zeros(7)
    tv = np.array([0.0, 1.0, -np.inf, 0.0])
    a = 0.5 - x2  # chart 1: (a, b) = (1/2 - y, x + 1/2)
    st[0] = eng.CHART
    st[1] = 1.0
    if a <= 0.5:
        st[2], st[3] = 0.0, math.log(a)
    else:
        st[2], st[3] = 1.0, math.log(1.0 - a)
    st[4] = math.log(x1)
    eng.prepare(st, tv)
    return st, tv


def check_contraction(x1: float, x2: float, params: Params, budget: int = 100000) -> dict:
    """Distance to the edge after the transition, relative to the distance before.

    The start point is ``(x1 - 1/2, x2)`` with ``x2`` in the fundamental
    domain ``]-5/12, -2/5]``; the transition ends at the first entry into
    ``tau_1(C0)``. Distances up to 1/4 are accepted: the edge chart stays
    exact there even though only ``x1 <= 1/(12K)`` lies in ``f0(C0)``.
    """
    if not 0.0 < x1 <= 0.25:
        raise ValueError("x1 must lie in (0, 1/4]")
    if not -5.0 / 12.0 < x2 <= -0.4:
        raise ValueError("x2 must lie in ]-5/12, -2/5]")
    st, tv = edge_state(x1, x2)
    cfg = params.engine_config()
    tau_n = _run_until_corner(st, tv, cfg, 1, budget)
    _, _, lb, _ = eng.corner_view(st, tv)
    # in tau_1(C0) the corner height is x + 1/2, the distance to the left edge
    ratio = math.exp(lb - math.log(x1))
    return {"ratio": ratio, "passed": ratio < 1.0, "tau": tau_n}


def check_trapping(p, params: Params, horizon: int = 2000) -> dict:
    """Measure when the orbit of p leaves [-5/12, 5/12]^2 for good.

    Returns the first time k0 after which every iterate up to the horizon
    lies in the square minus [-5/12, 5/12]^2, and whether the distance to
    the square boundary, sampled at successive corner entries, decreases.
    """
    x, y = _check_disk(p)
    cfg = params.engine_config()
    st, tv = eng.init_state(x, y, 1.0, 0.0)
    inside_core = np.zeros(horizon + 1, dtype=bool)
    in_square = np.zeros(horizon + 1, dtype=bool)
    dist = np.zeros(horizon + 1)
    corner = np.zeros(horizon + 1, dtype=np.int64)
    for k in range(horizon + 1):
        eng.prepare(st, tv)
        qx, qy = eng.state_xy(st)
        in_square[k] = max(abs(qx), abs(qy)) <= 0.5
        inside_core[k] = max(abs(qx), abs(qy)) < 5.0 / 12.0
        if st[0] == eng.CHART:
            dist[k] = math.exp(st[4])
        else:
            dist[k] = 0.5 - max(abs(qx), abs(qy))
        corner[k] = eng.corner_view(st, tv)[0]
        if k < horizon:
            eng.step(st, tv, cfg)
    bad = np.flatnonzero(inside_core | ~in_square)
    k0 = int(bad[-1]) + 1 if bad.size else 0
    entries = np.flatnonzero((corner[1:] >= 0) & (corner[:-1] < 0)) + 1
    entries = entries[entries >= k0]
    d = dist[entries]
    monotone = bool(np.all(np.diff(d) < 0)) if d.size > 1 else True
    return {"k0": k0, "trapped": k0 <= horizon, "entry_distances": d, "monotone": monotone}
