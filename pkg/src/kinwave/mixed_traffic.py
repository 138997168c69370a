"""Two-class kinematic wave model with a shared group speed.

Both classes travel at ``V(rho1, rho2)`` given by an extended triangular
diagram: free-flow speed below the critical surface
``(l1 + tau1 vf) rho1 + (l2 + tau2 vf) rho2 = 1`` and the headway law
``(1 - rho1 l1 - rho2 l2) / (rho1 tau1 + rho2 tau2)`` on or above it.

Composition ``rho2 / rho1`` moves with the traffic (contact waves at speed
``V``) while density changes travel on the slower family ``lambda1``.
Riemann problems are solved along the left state's composition ray, which
makes the Godunov boundary state explicit.

Functions named ``*_arrays`` work on ``(n, 2)`` arrays and drive the ring
solver; the scalar API wraps them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MixedConfigError(ValueError):
    """Unsupported parameters or CFL violation."""


class VacuumError(ValueError):
    """Riemann data from an empty left state with no unique answer."""


@dataclass(frozen=True)
class MixedParams:
    vf: float = 95.3333
    l1: float = 20.0
    l2: float = 40.0
    tau1: float = 1.5
    tau2: float = 3.0
    vf2: float | None = None

    def __post_init__(self):
        if min(self.vf, self.l1, self.l2, self.tau1, self.tau2) <= 0:
            raise MixedConfigError("all parameters must be positive")
        if self.vf2 is not None and self.vf2 != self.vf:
            raise MixedConfigError("both classes must share one free-flow speed")

    @property
    def lengths(self) -> np.ndarray:
        return np.array([self.l1, self.l2])

    @property
    def times(self) -> np.ndarray:
        return np.array([self.tau1, self.tau2])

    @property
    def critical_weights(self) -> np.ndarray:
        return self.lengths + self.times * self.vf

    @property
    def jam(self) -> tuple[float, float]:
        return 1.0 / self.l1, 1.0 / self.l2


@dataclass(frozen=True)
class MixedState:
    rho1: float
    rho2: float

    def __post_init__(self):
        if self.rho1 < 0 or self.rho2 < 0:
            raise ValueError("class densities must be non-negative")

    def as_array(self) -> np.ndarray:
        return np.array([self.rho1, self.rho2], dtype=float)

    @classmethod
    def of(cls, arr) -> "MixedState":
        return cls(float(arr[0]), float(arr[1]))


# ------------------------------------------------------------ array kernels

def free_mask(rho: np.ndarray, p: MixedParams) -> np.ndarray:
    return rho @ p.critical_weights < 1.0


def speed_arrays(rho: np.ndarray, p: MixedParams) -> np.ndarray:
    rho = np.atleast_2d(rho)
    occ = rho @ p.lengths
    resp = rho @ p.times
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        cong = (1.0 - occ) / resp
    return np.where(free_mask(rho, p), p.vf, np.maximum(cong, 0.0))


def lambda1_arrays(rho: np.ndarray, p: MixedParams) -> np.ndarray:
    rho = np.atleast_2d(rho)
    with np.errstate(divide="ignore", invalid="ignore"):
        cong = -(rho @ p.lengths) / (rho @ p.times)
    return np.where(free_mask(rho, p), p.vf, cong)


def intermediate_scale(left: np.ndarray, v_right: np.ndarray, p: MixedParams) -> np.ndarray:
    """Factor ``s`` with ``s * left`` on the left ray and ``V(s * left) = v_right``.

    Where ``v_right`` equals the free speed the answer is the critical point
    of the ray, unless the left state is itself free (then ``s = 1``).
    Vacuum rows return ``nan``.
    """
    occ = left @ p.lengths
    resp = left @ p.times
    with np.errstate(divide="ignore", invalid="ignore"):
        s = 1.0 / (occ + v_right * resp)
    left_free = free_mask(left, p)
    s = np.where(left_free & (v_right >= p.vf), 1.0, s)
    v_left = speed_arrays(left, p)
    s = np.where(v_left == v_right, 1.0, s)
    return s


def boundary_state_arrays(left: np.ndarray, right: np.ndarray, p: MixedParams) -> np.ndarray:
    """Self-similar state at each interface for ``(n, 2)`` left/right arrays."""
    left = np.atleast_2d(np.asarray(left, dtype=float))
    right = np.atleast_2d(np.asarray(right, dtype=float))
    v_l = speed_arrays(left, p)
    v_r = speed_arrays(right, p)
    s = intermediate_scale(left, v_r, p)
    vacuum = left.sum(axis=1) <= 0
    s = np.where(vacuum, 0.0, s)
    mid = s[:, None] * left

    with np.errstate(divide="ignore", invalid="ignore"):
        sigma = (v_l - s * v_r) / (1.0 - s)
    shock_pick = np.where(sigma > 0, 1.0, s)

    lam_l = lambda1_arrays(left, p)
    lam_m = lambda1_arrays(mid, p)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_crit = 1.0 / (left @ p.critical_weights)
    rare_pick = np.where(lam_l >= 0, 1.0, np.where(lam_m <= 0, s, s_crit))

    pick = np.where(s > 1.0, shock_pick, np.where(s < 1.0, rare_pick, 1.0))
    pick = np.where(vacuum, 0.0, pick)
    return pick[:, None] * left


def flux_arrays(state: np.ndarray, p: MixedParams) -> np.ndarray:
    return state * speed_arrays(state, p)[:, None]


# ------------------------------------------------------------- scalar API

def group_speed(st: MixedState, p: MixedParams) -> float:
    return float(speed_arrays(st.as_array(), p)[0])


def is_free(st: MixedState, p: MixedParams) -> bool:
    return bool(free_mask(np.atleast_2d(st.as_array()), p)[0])


def eigen(st: MixedState, p: MixedParams) -> tuple[float, float]:
    """Characteristic speeds ``(lambda1, lambda2)`` with ``lambda2 = V``."""
    arr = st.as_array()
    return float(lambda1_arrays(arr, p)[0]), float(speed_arrays(arr, p)[0])


def riemann_intermediate(left: MixedState, right: MixedState, p: MixedParams) -> MixedState:
    """State on the left composition ray sharing the right state's speed."""
    l_arr = np.atleast_2d(left.as_array())
    v_r = speed_arrays(right.as_array(), p)
    if l_arr.sum() <= 0:
        if v_r[0] >= p.vf:
            return MixedState(0.0, 0.0)
        raise VacuumError("intermediate state from an empty left state is undefined")
    s = intermediate_scale(l_arr, v_r, p)[0]
    return MixedState.of(s * l_arr[0])


def godunov_boundary_state(left: MixedState, right: MixedState, p: MixedParams) -> MixedState:
    return MixedState.of(boundary_state_arrays(left.as_array(), right.as_array(), p)[0])


def boundary_flux(left: MixedState, right: MixedState, p: MixedParams) -> tuple[float, float]:
    st = boundary_state_arrays(left.as_array(), right.as_array(), p)
    f = flux_arrays(st, p)[0]
    return float(f[0]), float(f[1])


# ------------------------------------------------------------------- ring

def ring_cfl(p: MixedParams, dx: float, dt: float) -> float:
    # |lambda1| never exceeds vf on the extended triangular diagram
    lam = max(p.vf, max(p.l1 / p.tau1, p.l2 / p.tau2))
    return lam * dt / dx


def step_ring(states: np.ndarray, p: MixedParams, dx: float, dt: float) -> np.ndarray:
    """One Godunov step on a periodic road; ``states`` has shape ``(n, 2)``."""
    if ring_cfl(p, dx, dt) > 1.0:
        raise MixedConfigError("CFL number exceeds 1")
    states = np.asarray(states, dtype=float)
    right = np.roll(states, -1, axis=0)
    face = flux_arrays(boundary_state_arrays(states, right, p), p)  # face i sits between cells i and i+1
    return states - dt / dx * (face - np.roll(face, 1, axis=0))


@dataclass
class RingRun:
    x: np.ndarray
    t: np.ndarray
    rho: np.ndarray  # (n_saved, n_cells, 2)
    params: MixedParams
    dx: float
    dt: float

    @property
    def speed(self) -> np.ndarray:
        n_t, n_x, _ = self.rho.shape
        return speed_arrays(self.rho.reshape(-1, 2), self.params).reshape(n_t, n_x)

    @property
    def composition(self) -> np.ndarray:
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.rho[..., 1] / self.rho[..., 0]


def sinusoidal_ring(p: MixedParams, n_cells: int, length: float,
                    base=(0.2, 0.15), amp=(0.16, 0.1)) -> tuple[np.ndarray, np.ndarray]:
    """Cell centres and initial class densities as jam fractions times a sine."""
    dx = length / n_cells
    x = (np.arange(n_cells) + 0.5) * dx
    wave = np.sin(2 * np.pi * x / length)
    jam1, jam2 = p.jam
    rho = np.column_stack([(base[0] + amp[0] * wave) * jam1,
                           (base[1] + amp[1] * wave) * jam2])
    return x, rho


def run_ring(rho0: np.ndarray, p: MixedParams, dx: float, dt: float,
             steps: int, save_every: int = 1) -> RingRun:
    if ring_cfl(p, dx, dt) > 1.0:
        raise MixedConfigError("CFL number exceeds 1")
    n = rho0.shape[0]
    x = (np.arange(n) + 0.5) * dx
    saved, times = [rho0.copy()], [0.0]
    rho = rho0.copy()
    for k in range(1, steps + 1):
        rho = step_ring(rho, p, dx, dt)
        if k % save_every == 0:
            saved.append(rho.copy())
            times.append(k * dt)
    return RingRun(x, np.array(times), np.array(saved), p, dx, dt)


def track_trajectories(run: RingRun, x0: np.ndarray) -> np.ndarray:
    """Vehicle paths ``dx/dt = V`` through the saved speed field (periodic).

    Uses Heun's method with linear interpolation in space and the saved
    time levels; returns positions unwrapped (not taken modulo the ring).
    """
    length = run.x[-1] + 0.5 * run.dx
    v = run.speed
    xs = np.empty((len(run.t), len(x0)))
    xs[0] = x0
    grid = np.concatenate([run.x - length, run.x, run.x + length])

    def vel(field, pos):
        return np.interp(np.mod(pos, length), grid, np.tile(field, 3))

    for k in range(1, len(run.t)):
        h = run.t[k] - run.t[k - 1]
        k1 = vel(v[k - 1], xs[k - 1])
        k2 = vel(v[k], xs[k - 1] + h * k1)
        xs[k] = xs[k - 1] + 0.5 * h * (k1 + k2)
    return xs


def minimum_speed_track(run: RingRun) -> tuple[np.ndarray, float]:
    """Path of the slowest point of the ring and its fitted drift speed.

    In the congested regime the slowest point is carried by the density
    family, so the fitted slope measures that wave speed.
    """
    v = run.speed
    n = v.shape[1]
    k = np.argmin(v, axis=1)
    y0 = v[np.arange(len(k)), (k - 1) % n]
    y1 = v[np.arange(len(k)), k]
    y2 = v[np.arange(len(k)), (k + 1) % n]
    denom = y0 - 2 * y1 + y2
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(denom != 0, 0.5 * (y0 - y2) / denom, 0.0)
    length = n * run.dx
    pos = run.x[k] + frac * run.dx
    pos = np.unwrap(pos * 2 * np.pi / length) * length / (2 * np.pi)
    slope = np.polyfit(run.t, pos, 1)[0]
    return pos, float(slope)
