"""Fundamental diagram families and the demand/supply primitives.

Every curve is parameterized per lane. A road with ``a`` lanes (or, more
generally, an inhomogeneity factor ``a``) carrying total density ``rho``
moves at ``V(rho / a)`` and carries flow ``rho * V(rho / a)``. All numeric
methods accept scalars or numpy arrays.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

KM_PER_MILE = 1.609344


class DomainError(ValueError):
    """A density or lane count lies outside the admissible range."""


@dataclass(frozen=True)
class UnitSystem:
    """Length unit ``l_km`` (km) and time unit ``tau_s`` (s) of a scenario."""

    l_km: float = 1.0
    tau_s: float = 1.0

    def __post_init__(self):
        if not (self.l_km > 0 and self.tau_s > 0):
            raise ValueError("unit length and unit time must be positive")

    @classmethod
    def miles_hours(cls) -> "UnitSystem":
        return cls(KM_PER_MILE, 3600.0)

    # speeds
    def speed_from_kph(self, v):
        return v * self.tau_s / (3600.0 * self.l_km)

    def speed_to_kph(self, v):
        return v * 3600.0 * self.l_km / self.tau_s

    def speed_from_mph(self, v):
        return self.speed_from_kph(v * KM_PER_MILE)

    def speed_to_mph(self, v):
        return self.speed_to_kph(v) / KM_PER_MILE

    # densities (vehicles per length unit)
    def density_from_vpkm(self, k):
        return k * self.l_km

    def density_to_vpkm(self, k):
        return k / self.l_km

    def density_from_vpm(self, k):
        return self.density_from_vpkm(k / KM_PER_MILE)

    def density_to_vpm(self, k):
        return self.density_to_vpkm(k) * KM_PER_MILE

    # flows (vehicles per time unit)
    def flow_from_vph(self, q):
        return q * self.tau_s / 3600.0

    def flow_to_vph(self, q):
        return q * 3600.0 / self.tau_s

    def length_to_km(self, x):
        return x * self.l_km

    def time_to_s(self, t):
        return t * self.tau_s


def _grid_max_slope(lane_flow, rho_j: float, n: int = 4001) -> float:
    u = np.linspace(0.0, rho_j, n)
    q = lane_flow(u)
    return float(np.max(np.abs(np.diff(q) / np.diff(u))))


@dataclass(frozen=True)
class FdCurve(ABC):
    """Base class: subclasses supply the per-lane speed law."""

    rho_j: float

    # -- per-lane laws (no domain checks, vectorized) --
    @abstractmethod
    def lane_speed(self, u):
        """Speed at per-lane density ``u``."""

    @abstractmethod
    def lane_speed_slope(self, u):
        """dV/du at per-lane density ``u``."""

    def lane_flow(self, u):
        return u * self.lane_speed(u)

    def lane_flow_slope(self, u):
        """Characteristic speed dQ/du = V + u V'."""
        return self.lane_speed(u) + u * self.lane_speed_slope(u)

    def lane_flow_slope_side(self, u, side: int):
        """One-sided characteristic speed (``side`` -1 from below, +1 from above)."""
        return self.lane_flow_slope(u)

    @cached_property
    def alpha(self) -> float:
        """Per-lane critical density (unique maximizer of per-lane flow)."""
        return self._find_alpha()

    def _find_alpha(self) -> float:
        g = self.lane_flow_slope
        hi = self.rho_j * (1 - 1e-12)
        return brentq(lambda u: float(g(u)), 0.0, hi, xtol=1e-14 * self.rho_j, rtol=1e-15)

    @cached_property
    def lane_capacity(self) -> float:
        return float(self.lane_flow(self.alpha))

    @cached_property
    def max_wave_speed(self) -> float:
        """Largest |dQ/drho| over the admissible range."""
        return _grid_max_slope(self.lane_flow, self.rho_j)

    # -- public operations with domain checks --
    def _check(self, a, rho):
        a_arr = np.asarray(a, dtype=float)
        r_arr = np.asarray(rho, dtype=float)
        if np.any(a_arr <= 0):
            raise DomainError(f"lane factor must be positive, got {a}")
        slack = 1e-12 * self.rho_j * a_arr
        if np.any(r_arr < -slack) or np.any(r_arr > a_arr * self.rho_j + slack):
            raise DomainError(f"density {rho} outside [0, a*rho_j]")
        return a_arr, r_arr

    def speed(self, a, rho):
        a, rho = self._check(a, rho)
        return _out(self.lane_speed(rho / a))

    def flow(self, a, rho):
        a, rho = self._check(a, rho)
        return _out(rho * self.lane_speed(rho / a))

    def critical_density(self, a):
        if np.any(np.asarray(a) <= 0):
            raise DomainError("lane factor must be positive")
        return a * self.alpha

    def capacity(self, a):
        if np.any(np.asarray(a) <= 0):
            raise DomainError("lane factor must be positive")
        return a * self.lane_capacity

    def demand(self, a, rho):
        a, rho = self._check(a, rho)
        return _out(self.raw_demand(a, rho))

    def supply(self, a, rho):
        a, rho = self._check(a, rho)
        return _out(self.raw_supply(a, rho))

    def char_speed(self, a, rho):
        a, rho = self._check(a, rho)
        return _out(self.lane_flow_slope(rho / a))

    # -- unchecked hot-path versions used by the network engine --
    def raw_demand(self, a, rho):
        u = rho / a
        return np.where(u <= self.alpha, rho * self.lane_speed(u), a * self.lane_capacity)

    def raw_supply(self, a, rho):
        u = rho / a
        return np.where(u <= self.alpha, a * self.lane_capacity, rho * self.lane_speed(u))

    # -- inverse branches of the per-lane flow --
    def lane_density_uc(self, q):
        """Under-critical per-lane density carrying flow ``q``."""
        q = min(max(q, 0.0), self.lane_capacity)
        if q >= self.lane_capacity:
            return self.alpha
        return brentq(lambda u: float(self.lane_flow(u)) - q, 0.0, self.alpha,
                      xtol=1e-13 * self.rho_j, rtol=1e-15)

    def lane_density_oc(self, q):
        """Over-critical per-lane density carrying flow ``q``."""
        q = min(max(q, 0.0), self.lane_capacity)
        if q >= self.lane_capacity:
            return self.alpha
        top = self.rho_j
        if float(self.lane_flow(top)) >= q:
            return top
        return brentq(lambda u: float(self.lane_flow(u)) - q, self.alpha, top,
                      xtol=1e-13 * self.rho_j, rtol=1e-15)

    # -- partial diagram Q(rho; k) = rho V(a, rho + k) --
    def partial_flow(self, a, rho, k):
        return rho * self.lane_speed((rho + k) / a)

    def partial_critical(self, a, k) -> float:
        """Own-density maximizing ``rho * V(a, rho + k)`` for fixed other density ``k``."""
        top = a * self.rho_j - k
        if top <= 0:
            return 0.0

        def slope(r):
            s = (r + k) / a
            return float(self.lane_speed(s) + (r / a) * self.lane_speed_slope(s))

        lo_val, hi_val = slope(0.0), slope(top)
        if lo_val <= 0:
            return 0.0
        if hi_val >= 0:
            return top
        return brentq(slope, 0.0, top, xtol=1e-14 * self.rho_j * a, rtol=1e-15)

    def partial_capacity(self, a, k) -> float:
        g = self.partial_critical(a, k)
        return float(self.partial_flow(a, g, k))

    def with_speed_factor(self, factor: float) -> "FdCurve":
        """Same curve with every speed scaled by ``factor``."""
        raise NotImplementedError

    def to_spec(self) -> dict:
        raise NotImplementedError


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class Triangular(FdCurve):
    """Piecewise-linear flow-density relation."""

    vf: float = 1.0
    rho_c: float = 0.2

    def __post_init__(self):
        if not (self.vf > 0 and 0 < self.rho_c < self.rho_j):
            raise ValueError("triangular diagram needs vf > 0 and 0 < rho_c < rho_j")

    @property
    def wave_speed(self) -> float:
        """Magnitude of the congested-branch slope."""
        return self.vf * self.rho_c / (self.rho_j - self.rho_c)

    def lane_speed(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            cong = self.wave_speed * (self.rho_j - u) / u
        return np.where(u <= self.rho_c, self.vf, cong)

    def lane_speed_slope(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            cong = -self.wave_speed * self.rho_j / (u * u)
        return np.where(u <= self.rho_c, 0.0, cong)

    def lane_flow(self, u):
        u = np.asarray(u, dtype=float)
        return np.where(u <= self.rho_c, self.vf * u, self.wave_speed * (self.rho_j - u))

    def lane_flow_slope(self, u):
        return np.where(np.asarray(u) <= self.rho_c, self.vf, -self.wave_speed)

    def lane_flow_slope_side(self, u, side):
        below = u <= self.rho_c if side < 0 else u < self.rho_c
        return self.vf if below else -self.wave_speed

    def _find_alpha(self):
        return self.rho_c

    @cached_property
    def max_wave_speed(self):
        return max(self.vf, self.wave_speed)

    def lane_density_uc(self, q):
        return min(max(q, 0.0) / self.vf, self.rho_c)

    def lane_density_oc(self, q):
        return max(self.rho_j - max(q, 0.0) / self.wave_speed, self.rho_c)

    def partial_critical(self, a, k):
        top = a * self.rho_j - k
        if top <= 0:
            return 0.0
        return max(a * self.rho_c - k, math.sqrt(a * self.rho_j * k) - k, 0.0)

    def with_speed_factor(self, factor):
        return replace(self, vf=self.vf * factor)

    def to_spec(self):
        return {"type": "triangular", "vf": self.vf, "rho_c": self.rho_c, "rho_j": self.rho_j}


@dataclass(frozen=True)
class Greenshields(FdCurve):
    """Linear speed-density relation."""

    vf: float = 1.0

    def __post_init__(self):
        if not self.vf > 0:
            raise ValueError("vf must be positive")

    def lane_speed(self, u):
        return self.vf * (1.0 - np.asarray(u, dtype=float) / self.rho_j)

    def lane_speed_slope(self, u):
        return np.full_like(np.asarray(u, dtype=float), -self.vf / self.rho_j)

    def _find_alpha(self):
        return 0.5 * self.rho_j

    @cached_property
    def max_wave_speed(self):
        return self.vf

    def lane_density_uc(self, q):
        q = min(max(q, 0.0), self.lane_capacity)
        disc = max(1.0 - 4.0 * q / (self.vf * self.rho_j), 0.0)
        return 0.5 * self.rho_j * (1.0 - math.sqrt(disc))

    def lane_density_oc(self, q):
        q = min(max(q, 0.0), self.lane_capacity)
        disc = max(1.0 - 4.0 * q / (self.vf * self.rho_j), 0.0)
        return 0.5 * self.rho_j * (1.0 + math.sqrt(disc))

    def with_speed_factor(self, factor):
        return replace(self, vf=self.vf * factor)

    def to_spec(self):
        return {"type": "greenshields", "vf": self.vf, "rho_j": self.rho_j}


# coefficients of the Kerner-Konhauser equilibrium speed
KK_SCALE = 5.0461
KK_CENTER = 0.25
KK_WIDTH = 0.06
KK_OFFSET = 3.72e-6


@dataclass(frozen=True)
class KernerKonhauser(FdCurve):
    """Logistic speed law; ``l`` and ``tau`` give the speed scale l/tau."""

    l: float = 1.0
    tau: float = 1.0

    def _logistic(self, u):
        z = (np.asarray(u, dtype=float) / self.rho_j - KK_CENTER) / KK_WIDTH
        return 1.0 / (1.0 + np.exp(z))

    def lane_speed(self, u):
        v = KK_SCALE * (self._logistic(u) - KK_OFFSET) * self.l / self.tau
        return np.maximum(v, 0.0)

    def lane_speed_slope(self, u):
        s = self._logistic(u)
        raw = KK_SCALE * (s - KK_OFFSET)
        slope = -KK_SCALE * s * (1.0 - s) / (KK_WIDTH * self.rho_j) * self.l / self.tau
        return np.where(raw > 0, slope, 0.0)

    def with_speed_factor(self, factor):
        return replace(self, l=self.l * factor)

    def to_spec(self):
        return {"type": "kerner_konhauser", "l": self.l, "tau": self.tau, "rho_j": self.rho_j}


@dataclass(frozen=True)
class Exponential(FdCurve):
    """Newell-type exponential speed law with jam wave speed ``cj`` < 0."""

    vf: float = 1.0
    cj: float = -1.0

    def __post_init__(self):
        if not (self.vf > 0 and self.cj < 0):
            raise ValueError("exponential diagram needs vf > 0 and cj < 0")

    def _expo(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", over="ignore"):
            arg = (abs(self.cj) / self.vf) * (1.0 - self.rho_j / u)
        return np.where(u > 0, np.exp(arg), 0.0)

    def lane_speed(self, u):
        return self.vf * (1.0 - self._expo(u))

    def lane_speed_slope(self, u):
        u = np.asarray(u, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            # exp(arg) / u^2 evaluated in log space so tiny u gives 0, not 0/0
            arg = (abs(self.cj) / self.vf) * (1.0 - self.rho_j / u) - 2.0 * np.log(u)
            d = -abs(self.cj) * self.rho_j * np.exp(arg)
        return np.where(u > 0, d, 0.0)

    def with_speed_factor(self, factor):
        return replace(self, vf=self.vf * factor, cj=self.cj * factor)

    def to_spec(self):
        return {"type": "exponential", "vf": self.vf, "cj": self.cj, "rho_j": self.rho_j}


def fd_from_spec(spec: dict, units: UnitSystem | None = None) -> FdCurve:
    """Build a curve from a scenario FD block.

    Speeds may be given as ``vf`` (scenario units), ``vf_mph`` or ``vf_kph``;
    densities as ``rho_*`` (scenario units), ``rho_*_vpm`` or ``rho_*_vpkm``.
    """
    units = units or UnitSystem()
    kind = spec.get("type")

    def speed(key):
        if key in spec:
            return float(spec[key])
        if key + "_mph" in spec:
            return float(units.speed_from_mph(spec[key + "_mph"]))
        if key + "_kph" in spec:
            return float(units.speed_from_kph(spec[key + "_kph"]))
        raise KeyError(key)

    def dens(key):
        if key in spec:
            return float(spec[key])
        if key + "_vpm" in spec:
            return float(units.density_from_vpm(spec[key + "_vpm"]))
        if key + "_vpkm" in spec:
            return float(units.density_from_vpkm(spec[key + "_vpkm"]))
        raise KeyError(key)

    if kind == "triangular":
        return Triangular(rho_j=dens("rho_j"), vf=speed("vf"), rho_c=dens("rho_c"))
    if kind == "greenshields":
        return Greenshields(rho_j=dens("rho_j"), vf=speed("vf"))
    if kind == "kerner_konhauser":
        return KernerKonhauser(rho_j=dens("rho_j"), l=float(spec.get("l", 1.0)),
                               tau=float(spec.get("tau", 1.0)))
    if kind == "exponential":
        return Exponential(rho_j=dens("rho_j"), vf=speed("vf"), cj=speed("cj"))
    raise KeyError(f"unknown fundamental diagram type {kind!r}")


# module-level functional aliases
def speed(fd: FdCurve, a, rho):
    return fd.speed(a, rho)


def flow(fd: FdCurve, a, rho):
    return fd.flow(a, rho)


def critical_density(fd: FdCurve, a):
    return fd.critical_density(a)


def capacity(fd: FdCurve, a):
    return fd.capacity(a)


def demand(fd: FdCurve, a, rho):
    return fd.demand(a, rho)


def supply(fd: FdCurve, a, rho):
    return fd.supply(a, rho)
