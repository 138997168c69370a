"""Fluxes through merges, diverges and general junctions.

All functions take demands of the upstream cells and supplies of the
downstream cells (flow units) and return the flows that cross the
junction during one step.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .fundamental_diagram import FdCurve


class JunctionConfigError(ValueError):
    """Invalid junction parameters (fractions, priorities, branch counts)."""


class StateError(ValueError):
    """Inconsistent partial densities."""


class OversupplyWarning(UserWarning):
    """The lane-ratio merge rule asked for more than the downstream supply."""


def _nonneg(values, what):
    for v in values:
        if v < 0 or math.isnan(v):
            raise ValueError(f"{what} must be non-negative, got {v}")


# ----------------------------------------------------------------- merges

@dataclass(frozen=True)
class Fairness:
    """Upstream shares proportional to upstream demands."""


@dataclass(frozen=True)
class DaganzoPriority:
    """Two-branch priority rule with fixed priorities summing to one."""

    priorities: tuple[float, float] = (0.5, 0.5)

    def __post_init__(self):
        p = self.priorities
        if any(x < 0 for x in p) or abs(sum(p) - 1.0) > 1e-9:
            raise JunctionConfigError("priorities must be non-negative and sum to 1")


@dataclass(frozen=True)
class LebacqueLanes:
    """Each branch may take the downstream supply times its lane ratio.

    With ``strict`` the total is scaled back to the downstream supply and an
    :class:`OversupplyWarning` is emitted.
    """

    upstream_lanes: tuple[float, ...]
    downstream_lanes: float
    strict: bool = False

    def __post_init__(self):
        if self.downstream_lanes <= 0 or any(x <= 0 for x in self.upstream_lanes):
            raise JunctionConfigError("lane counts must be positive")


MergeScheme = Fairness | DaganzoPriority | LebacqueLanes


def merge_flux(demands: Sequence[float], supply: float,
               scheme: MergeScheme = Fairness()) -> tuple[float, list[float]]:
    """Total merge flow and the share of each upstream branch."""
    demands = [float(d) for d in demands]
    _nonneg(demands, "demands")
    _nonneg([supply], "supply")
    total_demand = sum(demands)

    if isinstance(scheme, Fairness):
        if total_demand <= 0:
            return 0.0, [0.0] * len(demands)
        if supply >= total_demand:
            return total_demand, list(demands)
        shares = [supply * d / total_demand for d in demands]
        return supply, shares

    if isinstance(scheme, DaganzoPriority):
        if len(demands) != 2:
            raise JunctionConfigError("priority merge supports exactly two branches")
        d1, d2 = demands
        if supply >= total_demand:
            return total_demand, [d1, d2]
        p1 = scheme.priorities[0]
        # median of (D1, S - D2, p1 S) picks the priority point clipped to feasibility
        q1 = sorted((d1, supply - d2, p1 * supply))[1]
        return supply, [q1, supply - q1]

    if isinstance(scheme, LebacqueLanes):
        if len(scheme.upstream_lanes) != len(demands):
            raise JunctionConfigError("one lane count per upstream branch is required")
        shares = [min(d, lanes / scheme.downstream_lanes * supply)
                  for d, lanes in zip(demands, scheme.upstream_lanes)]
        total = sum(shares)
        if scheme.strict and total > supply:
            warnings.warn(f"lane-ratio merge oversupplies: {total} > {supply}", OversupplyWarning)
            shares = [s * supply / total for s in shares]
            total = supply
        return total, shares

    raise JunctionConfigError(f"unknown merge scheme {scheme!r}")


def metered_demand(demand: float, rate: float) -> float:
    """Demand seen downstream of a meter releasing at most ``rate``."""
    return min(rate, demand)


def signal_demand(demand: float, green_ratio: float, capacity: float) -> float:
    """Demand behind a signal passing ``green_ratio`` of capacity."""
    return min(green_ratio * capacity, demand)


# --------------------------------------------------------------- diverges

def _check_fractions(fractions):
    _nonneg(fractions, "fractions")
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise JunctionConfigError(f"fractions must sum to 1, got {sum(fractions)}")


def diverge_flux_proportional(demand: float, supplies: Sequence[float],
                              fractions: Sequence[float]) -> tuple[float, list[float]]:
    """Diverge with fixed turning fractions; a blocked branch blocks all."""
    _nonneg([demand], "demand")
    _nonneg(supplies, "supplies")
    _check_fractions(fractions)
    out = float(demand)
    for s, xi in zip(supplies, fractions):
        if xi > 0:
            out = min(out, s / xi)
    return out, [xi * out for xi in fractions]


def diverge_flux_free(demand: float, supplies: Sequence[float]) -> tuple[float, list[float]]:
    """Diverge without route choice: flow split in proportion to supplies."""
    _nonneg([demand], "demand")
    _nonneg(supplies, "supplies")
    total_supply = float(sum(supplies))
    if total_supply <= 0:
        return 0.0, [0.0] * len(supplies)
    out = min(float(demand), total_supply)
    if out == total_supply:
        return out, [float(s) for s in supplies]
    return out, [out * s / total_supply for s in supplies]


@lru_cache(maxsize=65536)
def _partial_peak(fd: FdCurve, a: float, k: float) -> tuple[float, float]:
    g = fd.partial_critical(a, k)
    return g, float(fd.partial_flow(a, g, k))


@dataclass(frozen=True)
class PartialState:
    """Density of one commodity with all other commodities frozen at ``k``."""

    rho_own: float
    k: float
    fd: FdCurve
    a: float = 1.0

    def __post_init__(self):
        if self.rho_own < 0 or self.k < 0:
            raise StateError("partial densities must be non-negative")
        if self.rho_own + self.k > self.a * self.fd.rho_j * (1 + 1e-12):
            raise StateError("total density exceeds jam density")

    @property
    def critical(self) -> float:
        return _partial_peak(self.fd, self.a, self.k)[0]

    @property
    def capacity(self) -> float:
        return _partial_peak(self.fd, self.a, self.k)[1]

    @property
    def flow(self) -> float:
        return float(self.fd.partial_flow(self.a, self.rho_own, self.k))

    @property
    def undercritical(self) -> bool:
        return self.rho_own <= self.critical


def partial_demand(ps: PartialState) -> float:
    """Demand of one commodity given the others: own flow if UC, else partial capacity."""
    return ps.flow if ps.rho_own < ps.critical else ps.capacity


def diverge_flux_instantaneous(partials: Sequence[PartialState],
                               supplies: Sequence[float]) -> tuple[float, list[float]]:
    """Diverge where each branch draws its own vehicles up to its supply."""
    _nonneg(supplies, "supplies")
    if partials:
        total = partials[0].rho_own + partials[0].k
        scale = max(total, partials[0].fd.rho_j * partials[0].a) * 1e-9
        if any(abs(p.rho_own + p.k - total) > scale for p in partials):
            raise StateError("branches disagree on the total upstream density")
        if abs(sum(p.rho_own for p in partials) - total) > scale:
            raise StateError("own densities do not add up to the total density")
    per = [min(s, partial_demand(p)) for p, s in zip(partials, supplies)]
    return float(sum(per)), per


def general_junction_flux(demands: Sequence[float], supplies: Sequence[float],
                          turning) -> tuple[float, list[float], list[float]]:
    """Many-to-many junction with turning fractions ``turning[u][d]``."""
    turning = np.asarray(turning, dtype=float)
    demands = np.asarray(demands, dtype=float)
    supplies = np.asarray(supplies, dtype=float)
    _nonneg(demands, "demands")
    _nonneg(supplies, "supplies")
    if turning.shape != (len(demands), len(supplies)):
        raise JunctionConfigError("turning matrix must be (upstream x downstream)")
    if np.any(turning < 0) or np.any(np.abs(turning.sum(axis=1) - 1.0) > 1e-9):
        raise JunctionConfigError("each turning row must be non-negative and sum to 1")
    total_demand = float(demands.sum())
    if total_demand <= 0:
        return 0.0, [0.0] * len(demands), [0.0] * len(supplies)
    agg = demands @ turning / total_demand
    total = total_demand
    for s, xi in zip(supplies, agg):
        if xi > 0:
            total = min(total, s / xi)
    if total == total_demand:
        per_up = demands.tolist()
    else:
        per_up = (total * demands / total_demand).tolist()
    return total, per_up, (total * agg).tolist()


# ------------------------------------------------- diverge Riemann problem

@dataclass(frozen=True)
class DivergeSolution:
    solution_type: int
    flux: float
    roots: tuple[float, ...]

    def as_dict(self) -> dict:
        return {"type": self.solution_type, "flux": self.flux, "roots": list(self.roots)}


def classify_diverge_riemann(left: PartialState, rho_right: float) -> DivergeSolution:
    """Seven-type solution of the frozen-composition problem on one road.

    The right state carries only the commodity of interest (``k = 0``) and
    lives on the same road as the left state.
    """
    fd, a = left.fd, left.a
    if not 0 <= rho_right <= a * fd.rho_j * (1 + 1e-12):
        raise StateError("right density outside [0, a*rho_j]")
    q_right = float(a * fd.lane_flow(rho_right / a))

    def uc_root(q):
        return a * fd.lane_density_uc(q / a)

    def oc_root(q):
        return a * fd.lane_density_oc(q / a)

    q_left = left.flow
    if left.undercritical:
        r1, r2 = uc_root(q_left), oc_root(q_left)
        if rho_right <= r1:
            return DivergeSolution(1, q_left, (r1, r2))
        if rho_right <= r2:
            return DivergeSolution(2, q_left, (r1, r2))
        return DivergeSolution(3, q_right, (r1, r2))
    q_max = left.capacity
    r1, r2, r0 = uc_root(q_max), oc_root(q_max), oc_root(q_left)
    if rho_right <= r1:
        return DivergeSolution(4, q_max, (r1, r2, r0))
    if rho_right < r2:
        return DivergeSolution(5, q_max, (r1, r2, r0))
    if rho_right <= r0:
        return DivergeSolution(6, q_right, (r1, r2, r0))
    return DivergeSolution(7, q_right, (r1, r2, r0))


def diverge_flux_sd(left: PartialState, rho_right: float) -> float:
    """min(partial demand upstream, supply downstream) on one road."""
    s = float(left.fd.raw_supply(left.a, rho_right))
    return min(partial_demand(left), s)
