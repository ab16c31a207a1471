"""Precise orbit engine for the base map and its wiggle perturbations.

Orbits of the base map spend most of their time exponentially close to the
boundary of the square ``[-1/2, 1/2]^2``, where plain doubles collapse onto
the edges. Near an edge the state is kept in an edge chart ``i``:

    (a, b) = tau_i^{-1}(p) + (1/2, 1/2)

with ``a`` the position along the bottom edge and ``b`` the height above it.
There the field is a skew product, ``da/dt = F(a)`` and ``d log b/dt = G(a)``,
so the engine stores ``log a`` (or ``log(1 - a)`` on the far half) and
``log b``. The tangent vector is stored as signed logarithms of its chart
components. Points far from the edges fall back to plain RK4 with the
variational equation.

State vector: ``[mode, chart, side, lu, lb, x, y]`` with mode 0 (chart) or 1
(global); side 0 stores ``lu = log a``, side 1 stores ``lu = log(1 - a)``.
Tangent vector: ``[la, sa, lb, sb]`` in chart mode, ``[vx, vy, 0, 0]`` in
global mode.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

from .field import FINE, H_STEP, _rot, _rot_inv, a0_der, a0_val, near_blend, rk4_flow, slow_der, slow_val, x0_der, x0_val
from .smooth import alpha, beta, dalpha, dbeta

CHART, GLOBAL = 0.0, 1.0
NEG_INF = -np.inf

# chart validity: b <= 1/3 during the step keeps the point in the pure
# bottom-strip formula (no inner blend, radial factor 1)
LOG_B_LEAVE = math.log(0.27)
B_ENTER = 0.25
LOG_HALF = math.log(0.5)
LOG_A_AFFINE = math.log(0.5 - 1.0 / 11.0)
LOG_C_AFFINE = math.log(1.0 / 3.0)
LOG_TWELFTH = math.log(1.0 / 12.0)
CORNER = 1.0 / 12.0
SCALE = 24.0  # corner chart [0, 2]^2 = 24 * (a, b)

# cfg layout: kappa, lam, L, variant, nreg, then REG_STRIDE numbers per region
VAR_NONE, VAR_G, VAR_GBAR = 0, 1, 2
REG_STRIDE = 7  # n, a_n, b_n, ell_n, N_n, amplitude, half-height


@njit(cache=True)
def to_slog(v):
    if v == 0.0:
        return NEG_INF, 0.0
    return math.log(abs(v)), (1.0 if v > 0.0 else -1.0)


@njit(cache=True)
def from_slog(l, s):
    if s == 0.0:
        return 0.0
    return s * math.exp(l)


@njit(cache=True)
def slog_add(l1, s1, l2, s2):
    if s1 == 0.0 or l1 == NEG_INF:
        if l2 == NEG_INF:
            return NEG_INF, 0.0
        return l2, s2
    if s2 == 0.0 or l2 == NEG_INF:
        return l1, s1
    if l1 < l2:
        l1, l2 = l2, l1
        s1, s2 = s2, s1
    d = l2 - l1
    if s1 == s2:
        return l1 + math.log1p(math.exp(d)), s1
    if d == 0.0:
        return NEG_INF, 0.0
    return l1 + math.log1p(-math.exp(d)), s1


@njit(cache=True)
def slog_norm(l1, s1, l2, s2):
    z1 = s1 == 0.0 or l1 == NEG_INF
    z2 = s2 == 0.0 or l2 == NEG_INF
    if z1 and z2:
        return NEG_INF
    if z1:
        return l2
    if z2:
        return l1
    m = max(l1, l2)
    return m + 0.5 * math.log1p(math.exp(-2.0 * abs(l1 - l2)))


# ---------------------------------------------------------------------------
# mode conversions
# ---------------------------------------------------------------------------


@njit(cache=True)
def chart_ab(st):
    u = math.exp(st[3])
    a = u if st[2] == 0.0 else 1.0 - u
    return a, math.exp(st[4])


@njit(cache=True)
def state_xy(st):
    if st[0] == GLOBAL:
        return st[5], st[6]
    a, b = chart_ab(st)
    return _rot(int(st[1]), a - 0.5, b - 0.5)


@njit(cache=True)
def tangent_xy(st, tv):
    if st[0] == GLOBAL:
        return tv[0], tv[1]
    return _rot(int(st[1]), from_slog(tv[0], tv[1]), from_slog(tv[2], tv[3]))


@njit(cache=True)
def to_global(st, tv):
    x, y = state_xy(st)
    vx, vy = tangent_xy(st, tv)
    st[0] = GLOBAL
    st[5] = x
    st[6] = y
    tv[0] = vx
    tv[1] = vy
    tv[2] = 0.0
    tv[3] = 0.0


@njit(cache=True)
def try_enter_chart(st, tv):
    """Switch a global state to the lowest edge chart if it is close to an edge."""
    x = st[5]
    y = st[6]
    best = -1
    bmin = 2.0
    for i in range(4):
        a, b = _rot_inv(i, x, y)
        b += 0.5
        if b < 0.0 or b > 1.0:
            return False
        if b < bmin:
            bmin = b
            best = i
    if bmin >= B_ENTER:
        return False
    a, b = _rot_inv(best, x, y)
    a += 0.5
    b += 0.5
    va, vb = _rot_inv(best, tv[0], tv[1])
    st[0] = CHART
    st[1] = best
    if a <= 0.5:
        st[2] = 0.0
        st[3] = math.log(a) if a > 0.0 else NEG_INF
    else:
        st[2] = 1.0
        st[3] = math.log(1.0 - a) if a < 1.0 else NEG_INF
    st[4] = math.log(b) if b > 0.0 else NEG_INF
    tv[0], tv[1] = to_slog(va)
    tv[2], tv[3] = to_slog(vb)
    return True


@njit(cache=True)
def canonicalize(st, tv):
    """Pick the chart with the smallest height and the better-conditioned side."""
    for _ in range(8):
        if st[3] > LOG_HALF:
            st[2] = 1.0 - st[2]
            st[3] = math.log1p(-math.exp(st[3]))
            continue
        if st[4] > st[3]:
            lu = st[3]
            st[3] = st[4]
            st[4] = lu
            la, sa, lb, sb = tv[0], tv[1], tv[2], tv[3]
            if st[2] == 0.0:
                # chart i+1: (a', b') = (1 - b, a), tangent (-vb, va)
                st[1] = (st[1] + 1.0) % 4.0
                st[2] = 1.0
                tv[0], tv[1], tv[2], tv[3] = lb, -sb, la, sa
            else:
                # chart i-1: (a', b') = (b, 1 - a), tangent (vb, -va)
                st[1] = (st[1] + 3.0) % 4.0
                st[2] = 0.0
                tv[0], tv[1], tv[2], tv[3] = lb, sb, la, -sa
            continue
        break


# ---------------------------------------------------------------------------
# chart-mode time-1 map
# ---------------------------------------------------------------------------


@njit(cache=True)
def _strip_rates(side, lu, kappa, lam, L, out):
    # out: dlu/dt, G, dF/da, dG/da
    u = math.exp(lu)
    if side == 0:
        x = u - 0.5
    else:
        x = 0.5 - u
    s = slow_val(x, L)
    ds = slow_der(x, L)
    X = x0_val(x, kappa, lam)
    dX = x0_der(x, kappa, lam)
    A = a0_val(x, kappa, lam)
    dA = a0_der(x, kappa, lam)
    F = s * X
    if side == 0:
        out[0] = -kappa * s if x <= 1.0 / 13.0 else F / u
    else:
        out[0] = lam * s if x >= 1.0 / 12.0 else -F / u
    out[1] = s * A
    out[2] = ds * X + s * dX
    out[3] = ds * A + s * dA


@njit(cache=True)
def _skew_rk4(st, kappa, lam, L, res):
    """Integrate (lu, int G, log Phi, W) over unit time; res gets the last three."""
    side = int(st[2])
    lu = st[3]
    ig = 0.0
    lphi = 0.0
    w = 0.0
    k1 = np.empty(4)
    k2 = np.empty(4)
    k3 = np.empty(4)
    k4 = np.empty(4)
    H = H_STEP
    for _ in range(int(round(1.0 / H))):
        x = math.exp(lu) - 0.5 if side == 0 else 0.5 - math.exp(lu)
        # the speed changes by at most a factor exp(kappa H) away from blends
        speed = abs(slow_val(x, L) * x0_val(x, kappa, lam))
        nsub = FINE if near_blend(x, 2.0 * H * speed + 1e-12) else 1
        h = H / nsub
        for _ in range(nsub):
            _strip_rates(side, lu, kappa, lam, L, k1)
            e1 = k1[3] * math.exp(lphi)
            _strip_rates(side, lu + 0.5 * h * k1[0], kappa, lam, L, k2)
            e2 = k2[3] * math.exp(lphi + 0.5 * h * k1[2])
            _strip_rates(side, lu + 0.5 * h * k2[0], kappa, lam, L, k3)
            e3 = k3[3] * math.exp(lphi + 0.5 * h * k2[2])
            _strip_rates(side, lu + h * k3[0], kappa, lam, L, k4)
            e4 = k4[3] * math.exp(lphi + h * k3[2])
            lu += h / 6.0 * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0])
            ig += h / 6.0 * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1])
            lphi += h / 6.0 * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2])
            w += h / 6.0 * (e1 + 2.0 * e2 + 2.0 * e3 + e4)
            if side == 1 and lu > LOG_HALF:
                # keep the stored coordinate below 1/2 so 1 - u stays accurate
                side = 0
                lu = math.log1p(-math.exp(lu))
    st[2] = side
    st[3] = lu
    res[0] = ig
    res[1] = lphi
    res[2] = w


@njit(cache=True)
def chart_step(st, tv, kappa, lam, L):
    if st[2] == 0.0 and st[3] <= LOG_A_AFFINE:
        # exact corner dynamics: diag(1/K, Lambda)
        st[3] -= kappa
        st[4] += lam
        tv[0] -= kappa
        tv[2] += lam
        return
    if st[2] == 1.0 and st[3] <= LOG_C_AFFINE:
        # exact right-hand part of the edge: 1 - a grows, b contracts
        st[3] += lam
        st[4] -= kappa
        tv[0] += lam
        tv[2] -= kappa
        return
    res = np.empty(3)
    _skew_rk4(st, kappa, lam, L, res)
    ig, lphi, w = res[0], res[1], res[2]
    lb_new = st[4] + ig
    la_old, sa = tv[0], tv[1]
    lw, sw = to_slog(w)
    t1 = lb_new + lw + la_old
    s1 = sw * sa
    if lb_new == NEG_INF:
        s1 = 0.0
    tv[2], tv[3] = slog_add(t1, s1, ig + tv[2], tv[3])
    tv[0] = la_old + lphi
    st[4] = lb_new


@njit(cache=True)
def global_step(st, tv, kappa, lam, L):
    x, y, J = rk4_flow(st[5], st[6], 1.0, int(round(1.0 / H_STEP)), kappa, lam, L)
    vx = J[0, 0] * tv[0] + J[0, 1] * tv[1]
    vy = J[1, 0] * tv[0] + J[1, 1] * tv[1]
    st[5] = x
    st[6] = y
    tv[0] = vx
    tv[1] = vy


# ---------------------------------------------------------------------------
# wiggle perturbations in corner-chart units X = 24 a, Y = 24 b
# ---------------------------------------------------------------------------


@njit(cache=True)
def wiggle(variant, reg, X, Y):
    """Return (dY, dY/dX, dY'/dY) for the perturbation of one region, or zeros."""
    n = reg[0]
    an = reg[1]
    bn = reg[2]
    ell = reg[3]
    N = reg[4]
    amp = reg[5]
    if variant == VAR_G:
        c = N / ell
        u1 = c * (X - an)
        u2 = c * (bn - X)
        w = c * Y
    else:
        c = 10.0 * n**4
        u1 = c * (X - an)
        u2 = c * (bn - X)
        w = n**4 * Y
    A1 = alpha(u1)
    A2 = alpha(u2)
    B = beta(w)
    cut = A1 * A2 * B
    if cut == 0.0:
        return 0.0, 0.0, 1.0
    dcut_x = c * (dalpha(u1) * A2 - A1 * dalpha(u2)) * B
    if variant == VAR_G:
        dcut_y = A1 * A2 * dbeta(w) * c
        ph = math.pi * u1
        wave = 2.0 + math.sin(ph)
        dwave = math.pi * c * math.cos(ph)
    else:
        dcut_y = A1 * A2 * dbeta(w) * n**4
        om = 10.0 * math.pi * n**4
        wave = math.cos(om * X)
        dwave = -om * math.sin(om * X)
    return amp * cut * wave, amp * (dcut_x * wave + cut * dwave), 1.0 + amp * wave * dcut_y


@njit(cache=True)
def find_region(cfg, X, Y):
    nreg = int(cfg[4])
    for k in range(nreg):
        base = 5 + REG_STRIDE * k
        if cfg[base + 1] <= X <= cfg[base + 2] and abs(Y) <= cfg[base + 6]:
            return k
    return -1


@njit(cache=True)
def region_at(st, cfg):
    """(region index, corner index) of the current state, or (-1, -1)."""
    if int(cfg[3]) == VAR_NONE:
        return -1, -1
    if st[0] == CHART:
        if st[2] != 0.0 or st[4] > st[3]:
            return -1, -1
        X = SCALE * math.exp(st[3])
        Y = SCALE * math.exp(st[4])
        k = find_region(cfg, X, Y)
        if k >= 0:
            return k, int(st[1])
        return -1, -1
    for i in range(4):
        a, b = _rot_inv(i, st[5], st[6])
        k = find_region(cfg, SCALE * (a + 0.5), SCALE * (b + 0.5))
        if k >= 0:
            return k, i
    return -1, -1


@njit(cache=True)
def apply_wiggle(st, tv, cfg):
    k, i = region_at(st, cfg)
    if k < 0:
        return -1
    variant = int(cfg[3])
    reg = cfg[5 + REG_STRIDE * k: 5 + REG_STRIDE * (k + 1)]
    if st[0] == CHART:
        X = SCALE * math.exp(st[3])
        Y = SCALE * math.exp(st[4])
        d, g21, g22 = wiggle(variant, reg, X, Y)
        la, sa = tv[0], tv[1]
        lg, sg = to_slog(g21)
        lh, sh = to_slog(g22)
        tv[2], tv[3] = slog_add(la + lg, sa * sg, tv[2] + lh, tv[3] * sh)
        if d > 0.0:
            ld = math.log(d / SCALE)
            lb = st[4]
            st[4] = max(lb, ld) + math.log1p(math.exp(-abs(lb - ld))) if lb != NEG_INF else ld
        elif d < 0.0:
            bnew = math.exp(st[4]) + d / SCALE
            if bnew > 0.0:
                st[4] = math.log(bnew)
            elif bnew == 0.0:
                st[4] = NEG_INF
            else:
                a = math.exp(st[3])
                va = from_slog(tv[0], tv[1])
                vb = from_slog(tv[2], tv[3])
                st[0] = GLOBAL
                st[5], st[6] = _rot(i, a - 0.5, bnew - 0.5)
                tv[0], tv[1] = _rot(i, va, vb)
                tv[2] = 0.0
                tv[3] = 0.0
        return k
    a, b = _rot_inv(i, st[5], st[6])
    X = SCALE * (a + 0.5)
    Y = SCALE * (b + 0.5)
    d, g21, g22 = wiggle(variant, reg, X, Y)
    va, vb = _rot_inv(i, tv[0], tv[1])
    vb = g21 * va + g22 * vb
    st[5], st[6] = _rot(i, a, b + d / SCALE)
    tv[0], tv[1] = _rot(i, va, vb)
    return k


# ---------------------------------------------------------------------------
# one step of the (perturbed) map
# ---------------------------------------------------------------------------


@njit(cache=True)
def renormalize(st, tv):
    if st[0] == CHART:
        ln = slog_norm(tv[0], tv[1], tv[2], tv[3])
        if ln == NEG_INF:
            return NEG_INF
        tv[0] -= ln
        tv[2] -= ln
        return ln
    nrm = math.hypot(tv[0], tv[1])
    if nrm == 0.0:
        return NEG_INF
    tv[0] /= nrm
    tv[1] /= nrm
    return math.log(nrm)


@njit(cache=True)
def prepare(st, tv):
    if st[0] == GLOBAL:
        try_enter_chart(st, tv)
    if st[0] == CHART:
        canonicalize(st, tv)
        if st[4] > LOG_B_LEAVE:
            to_global(st, tv)


@njit(cache=True)
def step(st, tv, cfg):
    """Advance by one iterate of the map; returns the log-growth of the tangent."""
    kappa, lam, L = cfg[0], cfg[1], cfg[2]
    prepare(st, tv)
    apply_wiggle(st, tv, cfg)
    if st[0] == CHART:
        chart_step(st, tv, kappa, lam, L)
    else:
        global_step(st, tv, kappa, lam, L)
    return renormalize(st, tv)


@njit(cache=True)
def init_state(x, y, vx, vy):
    st = np.zeros(7)
    tv = np.zeros(4)
    st[0] = GLOBAL
    st[5] = x
    st[6] = y
    nrm = math.hypot(vx, vy)
    if nrm > 0.0:
        tv[0] = vx / nrm
        tv[1] = vy / nrm
    prepare(st, tv)
    return st, tv


@njit(cache=True)
def corner_view(st, tv):
    """Corner index, log corner coordinates and log|tan| of the tangent.

    Returns (-1, 0, 0, 0) when the state is outside the four affine corners.
    """
    if st[0] == CHART:
        lc = LOG_TWELFTH
        if st[4] > lc:
            return -1, 0.0, 0.0, 0.0
        if st[2] == 0.0 and st[3] <= lc:
            lt = tv[2] - tv[0] if tv[3] != 0.0 else NEG_INF
            if tv[1] == 0.0:
                lt = np.inf
            return int(st[1]), st[3], st[4], lt
        if st[2] == 1.0 and st[3] <= lc:
            # far end of chart i is corner i-1 with (a', b') = (b, 1 - a)
            lt = tv[0] - tv[2] if tv[1] != 0.0 else NEG_INF
            if tv[3] == 0.0:
                lt = np.inf
            return (int(st[1]) + 3) % 4, st[4], st[3], lt
        return -1, 0.0, 0.0, 0.0
    for i in range(4):
        a, b = _rot_inv(i, st[5], st[6])
        a += 0.5
        b += 0.5
        if 0.0 <= a <= CORNER and 0.0 <= b <= CORNER:
            va, vb = _rot_inv(i, tv[0], tv[1])
            la = math.log(a) if a > 0.0 else NEG_INF
            lb = math.log(b) if b > 0.0 else NEG_INF
            if va == 0.0:
                lt = np.inf
            elif vb == 0.0:
                lt = NEG_INF
            else:
                lt = math.log(abs(vb)) - math.log(abs(va))
            return i, la, lb, lt
    return -1, 0.0, 0.0, 0.0


@njit(cache=True)
def run_orbit(st, tv, nsteps, cfg, xs, ys, vxs, vys, growth, corner, lca, lcb, ltheta, region):
    """Iterate nsteps times, recording the state before every step.

    All arrays have length nsteps + 1 except growth (length nsteps).
    """
    for k in range(nsteps + 1):
        prepare(st, tv)
        x, y = state_xy(st)
        xs[k] = x
        ys[k] = y
        vx, vy = tangent_xy(st, tv)
        vxs[k] = vx
        vys[k] = vy
        c, la, lb, lt = corner_view(st, tv)
        corner[k] = c
        lca[k] = la
        lcb[k] = lb
        ltheta[k] = lt
        rk, _ = region_at(st, cfg)
        region[k] = rk
        if k < nsteps:
            growth[k] = step(st, tv, cfg)


@njit(cache=True)
def run_points(st, tv, nsteps, cfg, xs, ys):
    for k in range(nsteps + 1):
        prepare(st, tv)
        x, y = state_xy(st)
        xs[k] = x
        ys[k] = y
        if k < nsteps:
            step(st, tv, cfg)


@njit(cache=True)
def run_until_corner(st, tv, cfg, target, budget):
    """Step until the state first lies in corner ``target``.

    Returns (steps, accumulated log-growth); steps is -1 if the budget ran out.
    """
    total = 0.0
    for k in range(1, budget + 1):
        total += step(st, tv, cfg)
        prepare(st, tv)
        c, _, _, _ = corner_view(st, tv)
        if c == target:
            return k, total
    return -1, total


@njit(cache=True)
def corner_state(i, la, lb, va, vb):
    """State in corner i from log corner coordinates and a chart tangent."""
    st = np.zeros(7)
    tv = np.zeros(4)
    st[0] = CHART
    st[1] = i
    st[3] = la
    st[4] = lb
    tv[0], tv[1] = to_slog(va)
    tv[2], tv[3] = to_slog(vb)
    renormalize(st, tv)
    prepare(st, tv)
    return st, tv


@njit(cache=True)
def corner_tangent(st, tv):
    """Unit tangent components in the frame of the host corner (0, 0 outside)."""
    c, _, _, _ = corner_view(st, tv)
    if c < 0:
        return c, 0.0, 0.0
    if st[0] == CHART:
        va = from_slog(tv[0], tv[1])
        vb = from_slog(tv[2], tv[3])
        if st[2] == 1.0:
            va, vb = vb, -va
    else:
        va, vb = _rot_inv(c, tv[0], tv[1])
    nrm = math.hypot(va, vb)
    return c, va / nrm, vb / nrm
