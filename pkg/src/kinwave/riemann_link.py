"""Exact Riemann solutions at a change in lane count.

A link whose lane factor jumps from ``a_L`` to ``a_R`` at ``x = 0`` is
treated as the 2x2 system in ``U = (a, rho)`` with a stationary family
(standing waves along which ``a`` changes and flow is constant) and the
usual kinematic family (shocks and rarefactions at fixed ``a``). Standing
waves never connect an under-critical state to an over-critical one.

The solver labels the fan with one of ten solution types and returns the
flux through ``x = 0``. :func:`boundary_flux_sd` gives the same flux from
the demand/supply formula and serves as an independent cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .fundamental_diagram import FdCurve


class ConfigurationError(ValueError):
    """Inputs that cannot form a Riemann problem."""


@dataclass(frozen=True)
class RoadState:
    """Augmented state: lane factor ``a`` and total density ``rho``."""

    a: float
    rho: float
    fd: FdCurve

    def __post_init__(self):
        if self.a <= 0:
            raise ConfigurationError("lane factor must be positive")
        if self.rho < 0 or self.rho > self.a * self.fd.rho_j * (1 + 1e-12):
            raise ConfigurationError(f"density {self.rho} outside [0, a*rho_j]")

    @property
    def flux(self) -> float:
        return float(self.a * self.fd.lane_flow(self.rho / self.a))

    @property
    def capacity(self) -> float:
        return self.a * self.fd.lane_capacity

    @property
    def undercritical(self) -> bool:
        # critical states count as under-critical
        return self.rho / self.a <= self.fd.alpha

    @property
    def char_speed(self) -> float:
        return float(self.fd.lane_flow_slope(self.rho / self.a))

    @property
    def demand(self) -> float:
        return self.flux if self.undercritical else self.capacity

    @property
    def supply(self) -> float:
        return self.capacity if self.undercritical else self.flux

    def as_dict(self) -> dict:
        return {"a": self.a, "rho": self.rho, "flux": self.flux,
                "regime": "UC" if self.undercritical else "OC"}


class WaveKind(str, Enum):
    SHOCK = "shock"
    RAREFACTION = "rarefaction"
    STANDING = "standing"


@dataclass(frozen=True)
class Wave:
    kind: WaveKind
    left: RoadState
    right: RoadState
    speed: tuple[float, float]  # (slowest, fastest); equal for shocks and standing waves

    def as_dict(self) -> dict:
        return {"kind": self.kind.value, "left": self.left.as_dict(),
                "right": self.right.as_dict(), "speed": list(self.speed)}


@dataclass(frozen=True)
class WaveFan:
    solution_type: int
    waves: tuple[Wave, ...]
    flux: float
    intermediates: tuple[RoadState, ...] = field(default=())

    def as_dict(self) -> dict:
        return {"type": self.solution_type, "flux": self.flux,
                "waves": [w.as_dict() for w in self.waves],
                "intermediate": [s.as_dict() for s in self.intermediates]}


def _uc_state(a: float, f: float, fd: FdCurve) -> RoadState:
    return RoadState(a, a * fd.lane_density_uc(f / a), fd)


def _oc_state(a: float, f: float, fd: FdCurve) -> RoadState:
    return RoadState(a, a * fd.lane_density_oc(f / a), fd)


def _critical_state(a: float, fd: FdCurve) -> RoadState:
    return RoadState(a, a * fd.alpha, fd)


def _connect(left: RoadState, right: RoadState) -> Wave | None:
    if left.a != right.a:
        return Wave(WaveKind.STANDING, left, right, (0.0, 0.0))
    if abs(left.rho - right.rho) <= 1e-12 * left.a * left.fd.rho_j:
        return None
    if left.rho < right.rho:
        sigma = (right.flux - left.flux) / (right.rho - left.rho)
        return Wave(WaveKind.SHOCK, left, right, (sigma, sigma))
    fd = left.fd
    slow = float(fd.lane_flow_slope_side(left.rho / left.a, -1))
    fast = float(fd.lane_flow_slope_side(right.rho / right.a, +1))
    return Wave(WaveKind.RAREFACTION, left, right, (slow, fast))


def _fan(kind: int, states: list[RoadState], flux: float) -> WaveFan:
    waves = []
    for l, r in zip(states[:-1], states[1:]):
        w = _connect(l, r)
        if w is not None:
            waves.append(w)
    return WaveFan(kind, tuple(waves), flux, tuple(states[1:-1]))


def _check_pair(left: RoadState, right: RoadState):
    if left.fd != right.fd:
        raise ConfigurationError("left and right states must share one fundamental diagram")


def solution_type(left: RoadState, right: RoadState) -> int:
    """Label of the entropy solution (1..10)."""
    _check_pair(left, right)
    f_l, f_r = left.flux, right.flux
    if left.undercritical:
        if f_r >= f_l:
            return 2
        if not right.undercritical:
            return 3
        a_star = f_l / left.fd.lane_capacity
        return 1 if right.a >= a_star else 4
    f_lmax = left.capacity
    if f_r >= f_lmax:
        return 6
    if right.undercritical:
        if right.a >= left.a:
            return 5
        return 9 if f_r >= f_l else 10
    return 7 if f_r >= f_l else 8


def classify(left: RoadState, right: RoadState) -> WaveFan:
    """Entropy-satisfying wave fan for the Riemann datum ``(left, right)``."""
    kind = solution_type(left, right)
    fd = left.fd
    f_l, f_r = left.flux, right.flux
    if kind == 1:
        mid = _uc_state(right.a, f_l, fd)
        return _fan(kind, [left, mid, right], f_l)
    if kind == 2:
        mid = _uc_state(right.a, f_l, fd)
        return _fan(kind, [left, mid, right], f_l)
    if kind == 3:
        mid = _oc_state(left.a, f_r, fd)
        return _fan(kind, [left, mid, right], f_r)
    if kind in (4, 9, 10):
        crit = _critical_state(right.a, fd)
        mid = _oc_state(left.a, crit.flux, fd)
        return _fan(kind, [left, mid, crit, right], right.capacity)
    if kind in (5, 6):
        crit = _critical_state(left.a, fd)
        mid = _uc_state(right.a, crit.flux, fd)
        return _fan(kind, [left, crit, mid, right], left.capacity)
    # types 7 and 8
    mid = _oc_state(left.a, f_r, fd)
    return _fan(kind, [left, mid, right], f_r)


def boundary_flux_riemann(left: RoadState, right: RoadState) -> float:
    """Flux at ``x = 0`` read from the solution-type table."""
    kind = solution_type(left, right)
    if kind in (1, 2):
        return left.flux
    if kind in (3, 7, 8):
        return right.flux
    if kind in (4, 9, 10):
        return right.capacity
    return left.capacity


def boundary_flux_sd(left: RoadState, right: RoadState) -> float:
    """Flux at ``x = 0`` as min(upstream demand, downstream supply)."""
    _check_pair(left, right)
    return min(left.demand, right.supply)
