"""Post-processing of run output: cumulative curves, travel times,
convergence rates, equilibrium detection and periodic-oscillation fits."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import least_squares


class AnalysisError(ValueError):
    """Inputs that the requested analysis cannot use."""


class DataError(AnalysisError):
    """Malformed measurement data (e.g. negative fluxes)."""


class NotYetPassedError(AnalysisError):
    """The requested vehicle number never reaches the location."""


class FifoWarning(UserWarning):
    """Vehicle identity from cumulative counts may be unreliable."""


# ------------------------------------------------------------- N-curves

@dataclass(frozen=True)
class NCurve:
    """Cumulative counts at one boundary; ``counts`` has shape (n_t, P)."""

    boundary: str
    t: np.ndarray
    counts: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def commodity(self, p: int) -> "NCurve":
        return NCurve(f"{self.boundary}[{p}]", self.t, self.counts[:, [p]])

    def at(self, time: float) -> np.ndarray:
        return np.array([np.interp(time, self.t, c) for c in self.counts.T])


def n_curve(flux, dt: float, boundary: str = "", t0: float = 0.0) -> NCurve:
    """Running sum of per-step fluxes ``flux`` (shape (K,) or (K, P))."""
    f = np.asarray(flux, dtype=float)
    if f.ndim == 1:
        f = f[:, None]
    if np.any(f < 0) or np.any(~np.isfinite(f)):
        raise DataError("fluxes must be finite and non-negative")
    if not dt > 0:
        raise DataError("time step must be positive")
    counts = np.vstack([np.zeros((1, f.shape[1])), np.cumsum(f * dt, axis=0)])
    t = t0 + dt * np.arange(len(counts))
    return NCurve(boundary, t, counts)


def _single(curve: NCurve) -> np.ndarray:
    return curve.counts[:, 0] if curve.counts.shape[1] == 1 else curve.total


def passing_time(n0, curve: NCurve):
    """Earliest time the curve reaches ``n0``, interpolating inside a step."""
    values = _single(curve)
    n0_arr = np.atleast_1d(np.asarray(n0, dtype=float))
    if np.any(n0_arr > values[-1] * (1 + 1e-12) + 1e-12):
        raise NotYetPassedError(f"vehicle {n0_arr.max()} exceeds the final count {values[-1]}")
    k = np.searchsorted(values, n0_arr, side="left")
    k = np.minimum(k, len(values) - 1)
    prev = np.maximum(k - 1, 0)
    dn = values[k] - values[prev]
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(dn > 0, (n0_arr - values[prev]) / dn, 0.0)
    t = np.where(k == 0, curve.t[0], curve.t[prev] + frac * (curve.t[k] - curve.t[prev]))
    return float(t[0]) if np.ndim(n0) == 0 else t


def _check_sync(up: NCurve, down: NCurve):
    if up.t.shape != down.t.shape or not np.allclose(up.t, down.t, rtol=0, atol=1e-12):
        raise AnalysisError("curves must share one time grid")
    if _single(up)[0] != 0 or _single(down)[0] != 0:
        raise AnalysisError("curves must start at zero at the synchronization epoch")
    slack = 1e-9 * max(1.0, float(_single(up)[-1]))
    if np.any(_single(down) > _single(up) + slack):
        raise AnalysisError("downstream count exceeds upstream count: curves are not synchronized")


def vehicle_travel_time(n0, up: NCurve, down: NCurve):
    _check_sync(up, down)
    return passing_time(n0, down) - passing_time(n0, up)


def _vehicle_grid(n1: float, n2: float) -> tuple[np.ndarray, float]:
    span = n2 - n1
    if span <= 0:
        raise AnalysisError("vehicle range must be non-empty")
    n = max(1, int(round(span)))
    width = span / n
    return n1 + (np.arange(n) + 0.5) * width, width


def total_travel_time(n_range: tuple[float, float], up: NCurve, down: NCurve) -> float:
    """Sum of individual travel times at unit-vehicle granularity."""
    ids, width = _vehicle_grid(*n_range)
    return float(np.sum(vehicle_travel_time(ids, up, down)) * width)


def average_travel_time(n_range: tuple[float, float], up: NCurve, down: NCurve) -> float:
    return total_travel_time(n_range, up, down) / (n_range[1] - n_range[0])


def area_between(up: NCurve, down: NCurve) -> float:
    """Trapezoid area between two synchronized curves (vehicle-hours)."""
    _check_sync(up, down)
    gap = _single(up) - _single(down)
    return float(np.sum(0.5 * (gap[1:] + gap[:-1]) * np.diff(up.t)))


def loading_time(flux, dt: float, t0: float = 0.0) -> float:
    """Flow-weighted mean release time of a piecewise-constant profile."""
    f = np.asarray(flux, dtype=float)
    if np.any(f < 0):
        raise DataError("fluxes must be non-negative")
    mid = t0 + (np.arange(len(f)) + 0.5) * dt
    mass = f.sum()
    if mass <= 0:
        raise AnalysisError("nothing was released")
    return float(np.sum(f * mid) / mass)


@dataclass(frozen=True)
class TravelTimeReport:
    commodity: int
    vehicles: float
    ttt: float
    att: float
    area_ttt: float
    free_flow_time: float | None = None


def travel_time_report(up: NCurve, down: NCurve, commodity: int = 0,
                       free_flow_time: float | None = None,
                       has_free_diverge: bool = False) -> TravelTimeReport:
    """TTT and ATT for all vehicles that crossed ``down`` by the end."""
    if has_free_diverge:
        warnings.warn("network contains free-choice diverges; vehicle identity from "
                      "cumulative counts is not guaranteed", FifoWarning)
    n2 = float(_single(down)[-1])
    ttt = total_travel_time((0.0, n2), up, down)
    return TravelTimeReport(commodity, n2, ttt, ttt / n2, area_between(up, down), free_flow_time)


# ---------------------------------------------------------- convergence

@dataclass(frozen=True)
class ConvergenceReport:
    resolutions: tuple[int, ...]
    errors: tuple[float, ...]
    rates: tuple[float | str, ...]
    norm: str


def _norm(e: np.ndarray, norm: str) -> float:
    if norm == "L1":
        return float(np.mean(np.abs(e)))
    if norm == "L2":
        return float(np.sqrt(np.mean(e * e)))
    if norm == "Linf":
        return float(np.max(np.abs(e)))
    raise AnalysisError(f"unknown norm {norm!r}")


def pair_difference(fine: np.ndarray, coarse: np.ndarray) -> np.ndarray:
    """Average adjacent fine cells and subtract the coarse solution."""
    fine, coarse = np.asarray(fine, float), np.asarray(coarse, float)
    if fine.shape != (2 * len(coarse),):
        raise AnalysisError("grids are not nested: fine grid must have twice the coarse cells")
    return 0.5 * (fine[0::2] + fine[1::2]) - coarse


def rates_from_errors(errors: Sequence[float]) -> list[float | str]:
    out = []
    for a, b in zip(errors[:-1], errors[1:]):
        a, b = abs(a), abs(b)
        if a == 0 and b == 0:
            out.append("exact")
        elif b == 0 or a == 0:
            out.append(math.inf if b == 0 else -math.inf)
        else:
            out.append(math.log2(a / b))
    return out


def convergence_rate(solutions: Sequence, norm: str = "L1") -> ConvergenceReport:
    """Self-convergence rates from solutions on successively doubled grids.

    Each entry is either a 1-D array of cell values (grid sizes N, 2N, 4N, ...)
    or a scalar (e.g. an average travel time at that resolution).
    """
    if len(solutions) < 2:
        raise AnalysisError("need at least two resolutions")
    if all(np.ndim(s) == 0 for s in solutions):
        vals = [float(s) for s in solutions]
        errors = [abs(b - a) for a, b in zip(vals[:-1], vals[1:])]
        res = tuple(range(len(vals)))
    else:
        arrs = [np.asarray(s, dtype=float) for s in solutions]
        errors = [_norm(pair_difference(f, c), norm) for c, f in zip(arrs[:-1], arrs[1:])]
        res = tuple(len(a) for a in arrs)
    return ConvergenceReport(res, tuple(errors), tuple(rates_from_errors(errors)), norm)


# ---------------------------------------------------------- equilibrium

@dataclass(frozen=True)
class EquilibriumResult:
    reached: bool
    t_eq: float | None
    state: np.ndarray | None


def equilibrium_from_changes(change: np.ndarray, dt: float, tol: float = 1e-6,
                             window: float = 0.5) -> tuple[bool, float | None]:
    """Use per-step maximum density changes (already divided by jam density).

    Reached iff every step in the trailing ``window`` is below ``tol``; the
    reported time is when the final quiet stretch first spans a window.
    """
    change = np.asarray(change, dtype=float)
    loud = np.nonzero(change >= tol)[0]
    quiet_start = 0 if loud.size == 0 else int(loud[-1]) + 1
    quiet_steps = len(change) - quiet_start
    need = int(math.ceil(window / dt - 1e-9))
    if quiet_steps < need:
        return False, None
    return True, (quiet_start + need) * dt


def detect_equilibrium(trajectory, t, rho_j, tol: float = 1e-6,
                       window: float = 0.5) -> EquilibriumResult:
    """Equilibrium test on a density trajectory of shape (n_t, n_cells).

    ``rho_j`` is the jam density scale (scalar or per cell).
    """
    traj = np.asarray(trajectory, dtype=float)
    t = np.asarray(t, dtype=float)
    if len(t) < 2:
        return EquilibriumResult(False, None, None)
    dt = float(t[1] - t[0])
    change = np.max(np.abs(np.diff(traj, axis=0)) / np.asarray(rho_j), axis=1)
    reached, t_rel = equilibrium_from_changes(change, dt, tol, window)
    if not reached:
        return EquilibriumResult(False, None, None)
    return EquilibriumResult(True, float(t[0] + t_rel), traj[-1].copy())


# ---------------------------------------------------------- oscillation

@dataclass(frozen=True)
class OscillationFit:
    ok: bool
    rho_max: float = math.nan
    rho_min: float = math.nan
    period: float = math.nan
    alpha: float = math.nan
    phase: float = math.nan
    residual: float = math.nan
    crossings: int = 0


def periodic_profile(t, rho_max, rho_min, period, alpha, phase=0.0):
    """Logistic two-stage waveform: falls in the first half period, rises in the second."""
    s = np.mod(np.asarray(t, dtype=float) - phase, period)
    amp = rho_max - rho_min
    rate = alpha * amp
    with np.errstate(over="ignore"):
        fall = rho_max - amp / (1.0 + np.exp(-rate * (s - period / 4)))
        rise = rho_max - amp / (1.0 + np.exp(rate * (s - 3 * period / 4)))
    return np.where(s < period / 2, fall, rise)


def _up_crossings(t: np.ndarray, y: np.ndarray, level: float) -> np.ndarray:
    below = y[:-1] < level
    above = y[1:] >= level
    idx = np.nonzero(below & above)[0]
    frac = (level - y[idx]) / (y[idx + 1] - y[idx])
    return t[idx] + frac * (t[idx + 1] - t[idx])


def fit_periodic(t, series, transient_cut: float = 0.4) -> OscillationFit:
    """Fit the logistic periodic waveform to a density series."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(series, dtype=float)
    start = t[0] + transient_cut * (t[-1] - t[0])
    keep = t >= start
    t, y = t[keep], y[keep]
    if len(t) < 8:
        return OscillationFit(False)
    hi, lo = float(y.max()), float(y.min())
    if hi - lo <= 1e-12 * max(abs(hi), 1.0):
        return OscillationFit(False)
    level = 0.5 * (hi + lo)
    ups = _up_crossings(t, y, level)
    if len(ups) < 3:
        return OscillationFit(False, hi, lo, crossings=len(ups))
    period = float(np.mean(np.diff(ups)))

    # the rising half is centred at 3T/4, so the period starts T*3/4 before an up-crossing
    phase0 = float(ups[0] - 0.75 * period)
    slope = np.max(np.abs(np.diff(y) / np.diff(t)))
    alpha0 = 4.0 * slope / (hi - lo) ** 2

    # extrema and crossings seed a joint fit; with the seeds held fixed the
    # steepness absorbs the gap between sampled extrema and the asymptotes
    def resid(x):
        return periodic_profile(t, x[0], x[1], x[2], x[3], x[4]) - y

    amp = hi - lo
    x0 = np.array([hi, lo, period, alpha0, phase0])
    sol = least_squares(resid, x0, x_scale=np.array([amp, amp, period, alpha0, period]),
                        bounds=([lo, lo - amp, 0.8 * period, 0.0, -np.inf],
                                [hi + amp, hi, 1.2 * period, np.inf, np.inf]))
    r_max, r_min, period, alpha, phase = sol.x
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    return OscillationFit(True, float(r_max), float(r_min), float(period), float(alpha),
                          float(phase), rms, len(ups))
