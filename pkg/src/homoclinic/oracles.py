"""Slow, independent routes used to cross-check the fast implementations."""

from __future__ import annotations

import itertools
import math

import numpy as np

from . import engine as eng
from .basemap import as_engine_config


def legal_tilings(special: list[bool], n1: int, n: int) -> list[tuple[int, list[tuple[str, int, int]]]]:
    """Every maximal right-anchored tiling of [t_{j0}, t_n[ by legal blocks.

    All length sequences (1 = normal, 2 = special) are enumerated for every
    left end j0 in [n1, n]; a tiling is kept when each block is legal and no
    legal block fits between t_{n1} and t_{j0}.
    """
    out = []
    for j0 in range(n1, n + 1):
        span = n - j0
        for k in range(span + 1):
            for lengths in itertools.product((1, 2), repeat=k):
                if sum(lengths) != span:
                    continue
                blocks, j, ok = [], j0, True
                for ln in lengths:
                    if ln == 1:
                        ok &= not special[j]
                        blocks.append(("normal", j, j + 1))
                    else:
                        ok &= special[j + 1]
                        blocks.append(("special", j, j + 2))
                    j += ln
                if not ok:
                    continue
                fits_normal = j0 - 1 >= n1 and not special[j0 - 1]
                fits_special = j0 - 2 >= n1 and special[j0 - 1]
                if not (fits_normal or fits_special):
                    out.append((j0, blocks))
    return out


def _frame_tangent(st, w) -> np.ndarray:
    if st[0] == eng.GLOBAL:
        return np.array([w[0], w[1], 0.0, 0.0])
    return np.array([*eng.to_slog(w[0]), *eng.to_slog(w[1])])


def _frame_components(st, tv) -> np.ndarray:
    if st[0] == eng.GLOBAL:
        return np.array([tv[0], tv[1]])
    return np.array([eng.from_slog(tv[0], tv[1]), eng.from_slog(tv[2], tv[3])])


def jacobian_product_log_growth(p, v, steps: int, map_cfg) -> float:
    """log |D f^steps(p) v| / |v| from the explicit product of one-step Jacobians.

    The base point is carried in the engine's edge-chart state so that points
    exponentially close to the boundary keep their position; each one-step
    Jacobian is assembled from the images of the two frame basis vectors and
    applied to the raw, never rescaled vector. Frames are rotations of the
    plane, so the final norm is the Euclidean one.
    """
    cfg = as_engine_config(map_cfg)
    st = np.zeros(7)
    st[0], st[5], st[6] = eng.GLOBAL, float(p[0]), float(p[1])
    tv = np.array([float(v[0]), float(v[1]), 0.0, 0.0])
    norm0 = math.hypot(tv[0], tv[1])
    eng.prepare(st, tv)
    w = _frame_components(st, tv)
    for _ in range(steps):
        cols = []
        for e in ((1.0, 0.0), (0.0, 1.0)):
            s = st.copy()
            t = _frame_tangent(s, e)
            g = eng.step(s, t, cfg)
            cols.append(_frame_components(s, t) * math.exp(g))
        st = s
        w = np.column_stack(cols) @ w
        t = _frame_tangent(st, w)
        eng.prepare(st, t)
        w = _frame_components(st, t)
    nrm = float(np.linalg.norm(w))
    if not 0.0 < nrm < math.inf:
        raise FloatingPointError("unnormalized product left the double range; use a shorter horizon")
    return math.log(nrm / norm0)
