"""Independent reference computations used to cross-check the library.

Nothing here imports kinwave internals beyond plain parameters, so a bug in
the library cannot leak into the reference values.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import linprog

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Maximizer of a unimodal ``f`` on [lo, hi] by golden-section search."""
    a, b = lo, hi
    c, d = b - GOLDEN * (b - a), a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol * max(1.0, abs(a) + abs(b)):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


def bisect(f, lo: float, hi: float, tol: float = 1e-15) -> float:
    flo = f(lo)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        fm = f(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
        if hi - lo < tol:
            break
    return 0.5 * (lo + hi)


def exponential_speed(u, vf=5.0, cj=-1.0, rho_j=180.0):
    return vf * (1.0 - math.exp(abs(cj) / vf * (1.0 - rho_j / u))) if u > 0 else vf


def kk_speed(u, rho_j=1.0):
    return 5.0461 * (1.0 / (1.0 + math.exp((u / rho_j - 0.25) / 0.06)) - 3.72e-6)


def triangular_flow(u, vf, rho_c, rho_j):
    return vf * u if u <= rho_c else vf * rho_c / (rho_j - rho_c) * (rho_j - u)


def proportional_max_flow(demands, supplies, turning) -> float:
    """Largest total flow with per-upstream flows in demand proportion.

    Linear program: maximize t subject to q_u = t D_u / sum(D), q_u <= D_u,
    sum_u q_u xi_ud <= S_d.
    """
    demands = np.asarray(demands, float)
    supplies = np.asarray(supplies, float)
    turning = np.asarray(turning, float)
    share = demands / demands.sum()
    a_ub = [[s] for s in share] + [[float(share @ turning[:, d])] for d in range(len(supplies))]
    b_ub = list(demands) + list(supplies)
    res = linprog(c=[-1.0], A_ub=a_ub, b_ub=b_ub, bounds=[(0, None)], method="highs")
    return float(res.x[0])


def mixed_speed(r1, r2, vf=95.3333, l1=20.0, l2=40.0, t1=1.5, t2=3.0):
    if (l1 + t1 * vf) * r1 + (l2 + t2 * vf) * r2 < 1.0:
        return vf
    return max((1.0 - r1 * l1 - r2 * l2) / (r1 * t1 + r2 * t2), 0.0)
