"""Bump functions, cutoffs and the wiggle parameter schedule.

All three profiles are built from the mollifier quotient
``theta(1-t) / (theta(1-t) + theta(t))`` with ``theta(s) = exp(-1/s)``; it is
evaluated as a logistic of ``1/(1-t) - 1/t`` so that no intermediate
underflows near the plateaus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import mpmath
import numpy as np
from numba import njit

LAMBDA = 6.0 / 5.0

# Smallest T for which LAMBDA**-(T+1) is still a normal double, with margin.
MAX_REPRESENTABLE_T = 3800
DEFAULT_T0 = 20


@njit(cache=True)
def psi(t):
    if t <= 0.0:
        return 1.0
    if t >= 1.0:
        return 0.0
    w = 1.0 / (1.0 - t) - 1.0 / t
    if w > 0.0:
        e = math.exp(-w)
        return e / (1.0 + e)
    return 1.0 / (1.0 + math.exp(w))


@njit(cache=True)
def dpsi(t):
    if t <= 0.0 or t >= 1.0:
        return 0.0
    w = 1.0 / (1.0 - t) - 1.0 / t
    s = math.exp(-abs(w))
    return -s / (1.0 + s) ** 2 * (1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t)))


@njit(cache=True)
def alpha(t):
    return psi(1.0 - t)


@njit(cache=True)
def dalpha(t):
    return -dpsi(1.0 - t)


@njit(cache=True)
def beta(t):
    return psi(2.0 * abs(t) - 1.0)


@njit(cache=True)
def dbeta(t):
    if t == 0.0:
        return 0.0
    return 2.0 * dpsi(2.0 * abs(t) - 1.0) * (1.0 if t > 0.0 else -1.0)


def psi_array(t) -> np.ndarray:
    """Vectorized ``psi``."""
    t = np.asarray(t, dtype=float)
    out = np.where(t <= 0.0, 1.0, 0.0)
    inner = (t > 0.0) & (t < 1.0)
    s = t[inner]
    w = 1.0 / (1.0 - s) - 1.0 / s
    # logistic of -w, written to avoid overflow on either side
    e = np.exp(-np.abs(w))
    out[inner] = np.where(w > 0.0, e / (1.0 + e), 1.0 / (1.0 + e))
    return out


def dpsi_array(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    inner = (t > 0.0) & (t < 1.0)
    s = t[inner]
    w = 1.0 / (1.0 - s) - 1.0 / s
    e = np.exp(-np.abs(w))
    out[inner] = -e / (1.0 + e) ** 2 * (1.0 / (s * s) + 1.0 / ((1.0 - s) * (1.0 - s)))
    return out


def bump(t):
    """Smooth nonincreasing step: 1 for t <= 0, 0 for t >= 1."""
    if np.ndim(t) == 0:
        return psi(float(t))
    return psi_array(t)


def plateau_cutoff(t):
    """Even cutoff equal to 1 on |t| <= 1/2 and 0 on |t| >= 1."""
    if np.ndim(t) == 0:
        return beta(float(t))
    return psi_array(2.0 * np.abs(np.asarray(t, dtype=float)) - 1.0)


def flat_cutoff(t, r: float = 1.0):
    """Nondecreasing cutoff, 0 for t <= 0 and 1 for t >= 1.

    The same profile works for every smoothness order ``r >= 1``: near 0 it
    behaves like ``e * exp(-1/t)``, so ``alpha'/alpha**(1-1/r)`` tends to 0.
    """
    if r < 1:
        raise ValueError(f"smoothness order r must be >= 1, got {r}")
    if np.ndim(t) == 0:
        return alpha(float(t))
    return psi_array(1.0 - np.asarray(t, dtype=float))


def _softplus(z: float) -> float:
    return z + math.log1p(math.exp(-z)) if z > 0 else math.log1p(math.exp(z))


def log_flat_cutoff(t: float) -> float:
    """log(flat_cutoff(t)) without underflow, for 0 < t < 1."""
    z = 1.0 / t - 1.0 / (1.0 - t)
    return -_softplus(z)


def log_flat_cutoff_ratio(t: float, r: float) -> float:
    """log of |alpha'(t)| / alpha(t)**(1 - 1/r) for 0 < t < 1."""
    if not 0.0 < t < 1.0:
        raise ValueError("ratio is only defined on the open unit interval")
    la = log_flat_cutoff(t)
    # log(1 - alpha) = log(alpha(1 - t)) by the symmetry psi(t) + psi(1-t) = 1
    l1ma = log_flat_cutoff(1.0 - t)
    lw = math.log(1.0 / (t * t) + 1.0 / ((1.0 - t) * (1.0 - t)))
    return la / r + l1ma + lw


@dataclass(frozen=True)
class ScheduleEntry:
    n: int
    a: float
    b: float
    ell: float
    T: int
    N: int

    @property
    def height(self) -> float:
        """Half-height ell/N of the wiggle rectangle."""
        return self.ell / self.N

    @property
    def kick(self) -> float:
        """Wiggle amplitude LAMBDA**-T."""
        return LAMBDA ** (-self.T)


def wiggle_count(T: int, r: float, n: int, lam: float = LAMBDA) -> int:
    """floor(lam**(T/r) / n**5), evaluated with 50 significant digits."""
    with mpmath.workdps(50):
        lam_mp = mpmath.mpf(6) / 5 if lam == LAMBDA else mpmath.mpf(lam)
        val = lam_mp ** (mpmath.mpf(T) / mpmath.mpf(r)) / mpmath.mpf(n) ** 5
        return int(mpmath.floor(val))


@dataclass(frozen=True)
class PerturbationSchedule:
    """Wiggle schedule: n -> (a_n, b_n, ell_n, T_n, N_n) for n0 <= n <= n_max."""

    n0: int
    r: float
    T: Mapping[int, int]
    lam: float = LAMBDA
    entries: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n0 < 2:
            raise ValueError("n0 must be >= 2")
        if self.r < 1:
            raise ValueError("r must be >= 1")
        if self.lam != LAMBDA:
            raise ValueError("the expansion rate is fixed to 6/5")
        ns = sorted(self.T)
        if not ns or ns[0] != self.n0 or ns != list(range(self.n0, ns[-1] + 1)):
            raise ValueError("T must be given for every n in n0..n_max")
        Ts = [int(self.T[n]) for n in ns]
        if any(t2 <= t1 for t1, t2 in zip(Ts, Ts[1:])):
            raise ValueError("T_n must be strictly increasing")
        entries = {}
        for n in ns:
            Tn = int(self.T[n])
            if Tn + 1 > MAX_REPRESENTABLE_T:
                raise ValueError(f"T_{n}={Tn}: LAMBDA**-(T+1) underflows double precision")
            N = wiggle_count(Tn, self.r, n)
            if N < 2:
                raise ValueError(f"N_{n} = {N} < 2 (T_{n}={Tn}, r={self.r})")
            a = 1.0 + 1.0 / n**2
            ell = 1.0 / n**4
            entries[n] = ScheduleEntry(n=n, a=a, b=a + ell, ell=ell, T=Tn, N=N)
        ordered = [entries[n] for n in ns]
        for e1, e2 in zip(ordered, ordered[1:]):
            # a_n decreases in n: R_{n+1} must sit strictly left of R_n
            if not e2.b < e1.a:
                raise ValueError(f"rectangles R_{e1.n} and R_{e2.n} overlap")
        object.__setattr__(self, "entries", entries)

    @property
    def n_max(self) -> int:
        return max(self.T)

    @classmethod
    def linear(cls, n0: int, r: float, n_max: int, T0: int | None = None):
        """T_n = T0 * n.

        By default T0 is the smallest value >= 20 giving N_{n0} >= 2; the
        floor of 20 keeps the rounding in N_n from breaking the decay of the
        wiggle size in n (T0 = 20 also reproduces T_2 = 40).
        """
        if T0 is None:
            T0 = DEFAULT_T0
            while wiggle_count(T0 * n0, r, n0) < 2:
                T0 += 1
        return cls(n0=n0, r=r, T={n: T0 * n for n in range(n0, n_max + 1)})


def schedule_entry(sched: PerturbationSchedule, n: int) -> ScheduleEntry:
    if n < sched.n0:
        raise ValueError(f"n={n} below n0={sched.n0}")
    if n not in sched.entries:
        raise ValueError(f"n={n} is not scheduled (n_max={sched.n_max})")
    return sched.entries[n]
