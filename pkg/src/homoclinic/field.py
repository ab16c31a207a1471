"""Numba kernels for the vector field, its Jacobian and the RK4 time-1 map.

The field on the bottom strip ``y <= -1/10`` is

    V0(x, y) = s(x) R(x, y) * (X0(x), A0(x) * (y + 1/2))

with ``s`` the slowdown factor and ``R`` the radial cutoff (vanishing for
``x^2 + y^2 >= 2``); the three other strips are rotated copies, and a radial
repeller fills ``Q0 = [-1/10, 1/10]^2``.
"""

import math

import numpy as np
from numba import njit

from .smooth import dpsi, psi

H_STEP = 1.0 / 256.0
INNER = 0.1
OUTER = 1.0 / 6.0


# ---------------------------------------------------------------------------
# scalar profiles along the bottom strip
# ---------------------------------------------------------------------------


@njit(cache=True)
def x0_val(x, kappa, lam):
    if x <= 1.0 / 13.0:
        return -kappa * (x + 0.5)
    if x >= 1.0 / 12.0:
        return -lam * (0.5 - x)
    p = psi(156.0 * x - 12.0)
    return -p * kappa * (x + 0.5) - (1.0 - p) * lam * (0.5 - x)


@njit(cache=True)
def x0_der(x, kappa, lam):
    if x <= 1.0 / 13.0:
        return -kappa
    if x >= 1.0 / 12.0:
        return lam
    p = psi(156.0 * x - 12.0)
    dp = 156.0 * dpsi(156.0 * x - 12.0)
    return -dp * kappa * (x + 0.5) - p * kappa + dp * lam * (0.5 - x) + (1.0 - p) * lam


@njit(cache=True)
def a0_val(x, kappa, lam):
    if x <= -1.0 / 11.0:
        return lam
    if x >= -1.0 / 12.0:
        return -kappa
    q = psi(132.0 * x + 12.0)
    return q * lam - (1.0 - q) * kappa


@njit(cache=True)
def a0_der(x, kappa, lam):
    if x <= -1.0 / 11.0 or x >= -1.0 / 12.0:
        return 0.0
    return 132.0 * dpsi(132.0 * x + 12.0) * (lam + kappa)


@njit(cache=True)
def slow_val(x, L):
    # 1/L on the core |440x - 42| <= 1, 1 once |440x - 42| >= 2
    return 1.0 - (1.0 - 1.0 / L) * psi(abs(440.0 * x - 42.0) - 1.0)


@njit(cache=True)
def slow_der(x, L):
    u = 440.0 * x - 42.0
    if u == 0.0:
        return 0.0
    sgn = 1.0 if u > 0.0 else -1.0
    return -(1.0 - 1.0 / L) * dpsi(abs(u) - 1.0) * 440.0 * sgn


@njit(cache=True)
def radial_val(x, y):
    # 1 for x^2 + y^2 <= 1/2, 0 for x^2 + y^2 >= 2
    return psi((x * x + y * y - 0.5) / 1.5)


@njit(cache=True)
def radial_grad(x, y):
    d = dpsi((x * x + y * y - 0.5) / 1.5)
    return d * 2.0 * x / 1.5, d * 2.0 * y / 1.5


@njit(cache=True)
def v0_vals(x, y, kappa, lam, L):
    """Bottom-strip field and Jacobian at (x, y): (f1, f2, j11, j12, j21, j22)."""
    s = slow_val(x, L)
    ds = slow_der(x, L)
    rad = radial_val(x, y)
    rx, ry = radial_grad(x, y)
    al = s * rad
    al_x = ds * rad + s * rx
    al_y = s * ry
    X = x0_val(x, kappa, lam)
    dX = x0_der(x, kappa, lam)
    A = a0_val(x, kappa, lam)
    dA = a0_der(x, kappa, lam)
    yt = y + 0.5
    return (
        al * X,
        al * A * yt,
        al_x * X + al * dX,
        al_y * X,
        al_x * A * yt + al * dA * yt,
        al_y * A * yt + al * A,
    )


@njit(cache=True)
def _rot(i, u, v):
    # tau_i applied to (u, v)
    if i == 0:
        return u, v
    if i == 1:
        return v, -u
    if i == 2:
        return -u, -v
    return -v, u


@njit(cache=True)
def _rot_inv(i, u, v):
    return _rot((4 - i) % 4, u, v)


@njit(cache=True)
def v1_branch(x, y):
    """Index of the strip formula used at (x, y), or -1 inside Q0."""
    if y <= -INNER:
        return 0
    if x <= -INNER:
        return 1
    if y >= INNER:
        return 2
    if x >= INNER:
        return 3
    return -1


@njit(cache=True)
def v1_vals(i, x, y, kappa, lam, L):
    """Rotated copy tau_i V0 tau_i^{-1} of the strip field, with Jacobian."""
    u, v = _rot_inv(i, x, y)
    f1, f2, j11, j12, j21, j22 = v0_vals(u, v, kappa, lam, L)
    g1, g2 = _rot(i, f1, f2)
    # R J R^T column by column
    c0x, c0y = _rot(i, j11, j21)
    c1x, c1y = _rot(i, j12, j22)
    e0u, e0v = _rot_inv(i, 1.0, 0.0)
    e1u, e1v = _rot_inv(i, 0.0, 1.0)
    return (
        g1,
        g2,
        c0x * e0u + c1x * e0v,
        c0x * e1u + c1x * e1v,
        c0y * e0u + c1y * e0v,
        c0y * e1u + c1y * e1v,
    )


@njit(cache=True)
def inner_weight(x, y):
    """1 on Q0, 0 outside Q, with its gradient."""
    ux = 15.0 * (abs(x) - INNER)
    uy = 15.0 * (abs(y) - INNER)
    px = psi(ux)
    py = psi(uy)
    sx = 1.0 if x >= 0.0 else -1.0
    sy = 1.0 if y >= 0.0 else -1.0
    return px * py, 15.0 * sx * dpsi(ux) * py, 15.0 * sy * px * dpsi(uy)


@njit(cache=True)
def field_vals(x, y, kappa, lam, L):
    """Full field V and its Jacobian: (f1, f2, j11, j12, j21, j22)."""
    m, mx, my = inner_weight(x, y)
    rho = lam
    if m == 1.0:
        return rho * x, rho * y, rho, 0.0, 0.0, rho
    w1, w2, a11, a12, a21, a22 = v1_vals(v1_branch(x, y), x, y, kappa, lam, L)
    if m == 0.0:
        return w1, w2, a11, a12, a21, a22
    return (
        (1.0 - m) * w1 + m * rho * x,
        (1.0 - m) * w2 + m * rho * y,
        (1.0 - m) * a11 - w1 * mx + m * rho + rho * x * mx,
        (1.0 - m) * a12 - w1 * my + rho * x * my,
        (1.0 - m) * a21 - w2 * mx + rho * y * mx,
        (1.0 - m) * a22 - w2 * my + m * rho + rho * y * my,
    )


@njit(cache=True)
def _deriv(z, kappa, lam, L, dz):
    # z = (x, y, J11, J12, J21, J22); dJ/dt = DV J
    f1, f2, j11, j12, j21, j22 = field_vals(z[0], z[1], kappa, lam, L)
    dz[0] = f1
    dz[1] = f2
    dz[2] = j11 * z[2] + j12 * z[4]
    dz[3] = j11 * z[3] + j12 * z[5]
    dz[4] = j21 * z[2] + j22 * z[4]
    dz[5] = j21 * z[3] + j22 * z[5]


FINE = 256  # substeps per coarse step near a blend line


@njit(cache=True)
def near_blend(u, margin):
    """True if the along-edge coordinate u is within margin of a steep blend."""
    if 1.0 / 13.0 - margin <= u <= 1.0 / 12.0 + margin:
        return True
    if -1.0 / 11.0 - margin <= u <= -1.0 / 12.0 + margin:
        return True
    if 40.0 / 440.0 - margin <= u <= 44.0 / 440.0 + margin:
        return True
    return False


@njit(cache=True)
def _global_needs_fine(x, y, margin):
    m = max(abs(x), abs(y))
    if INNER - margin <= m <= OUTER + margin:
        return True
    for i in range(4):
        u, v = _rot_inv(i, x, y)
        if near_blend(u, margin):
            return True
    return False


@njit(cache=True)
def _rk4_substep(z, h, kappa, lam, L, k1, k2, k3, k4, tmp):
    _deriv(z, kappa, lam, L, k1)
    for j in range(6):
        tmp[j] = z[j] + 0.5 * h * k1[j]
    _deriv(tmp, kappa, lam, L, k2)
    for j in range(6):
        tmp[j] = z[j] + 0.5 * h * k2[j]
    _deriv(tmp, kappa, lam, L, k3)
    for j in range(6):
        tmp[j] = z[j] + h * k3[j]
    _deriv(tmp, kappa, lam, L, k4)
    for j in range(6):
        z[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])


@njit(cache=True)
def rk4_flow(x, y, t, nsteps, kappa, lam, L, refine=True):
    """Classical RK4 for the flow and variational equation.

    Returns (x, y, J) after time t using nsteps coarse steps; with refine,
    a coarse step that may touch a steep blend is split into FINE substeps.
    """
    z = np.array([x, y, 1.0, 0.0, 0.0, 1.0])
    k1 = np.empty(6)
    k2 = np.empty(6)
    k3 = np.empty(6)
    k4 = np.empty(6)
    tmp = np.empty(6)
    h = t / nsteps
    for _ in range(nsteps):
        if refine:
            f1, f2, _a, _b, _c, _d = field_vals(z[0], z[1], kappa, lam, L)
            fine = _global_needs_fine(z[0], z[1], 2.0 * abs(h) * math.hypot(f1, f2) + 1e-12)
        else:
            fine = False
        if fine:
            for _ in range(FINE):
                _rk4_substep(z, h / FINE, kappa, lam, L, k1, k2, k3, k4, tmp)
        else:
            _rk4_substep(z, h, kappa, lam, L, k1, k2, k3, k4, tmp)
    J = np.empty((2, 2))
    J[0, 0] = z[2]
    J[0, 1] = z[3]
    J[1, 0] = z[4]
    J[1, 1] = z[5]
    return z[0], z[1], J


