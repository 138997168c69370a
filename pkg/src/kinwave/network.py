"""Discrete multi-commodity kinematic wave network engine.

Roads are split into uniform cells. Each step computes demand and supply
per cell, resolves every link-internal boundary with ``min(D, S)`` and
every junction with the models in :mod:`kinwave.junction_models`, then
updates total and per-commodity densities conservatively. Commodity
proportions leave a cell in the proportions they hold there (FIFO).

Origins and destinations are links without cells. An origin releases
``min(demand profile, supply of the first cell)``; the shortfall is kept as
a queue count but never released later. A destination accepts at most its
supply profile.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import junction_models as jm
from .fundamental_diagram import FdCurve


class ConsistencyError(RuntimeError):
    """A step produced a state that violates the conservation bounds."""


class CflError(ValueError):
    """The time step is too long for the cell size."""


class LinkKind(str, Enum):
    ROAD = "road"
    ORIGIN = "origin"
    DESTINATION = "destination"


class JunctionType(str, Enum):
    LINEAR = "linear"
    MERGE = "merge"
    DIVERGE_PROPORTIONAL = "diverge-proportional"
    DIVERGE_INSTANTANEOUS = "diverge-instantaneous"
    DIVERGE_FREE = "diverge-free"
    GENERAL = "general"

    @property
    def code(self) -> int:
        return list(JunctionType).index(self)


@dataclass(frozen=True)
class Profile:
    """Piecewise-constant signal: ``value`` holds from each start time on."""

    steps: tuple[tuple[float, float], ...] = ((0.0, 0.0),)

    def __post_init__(self):
        starts = [s for s, _ in self.steps]
        if not self.steps or starts != sorted(starts):
            raise ValueError("profile start times must be given in increasing order")

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls(((0.0, float(value)),))

    def __call__(self, t: float) -> float:
        value = 0.0
        for start, v in self.steps:
            if start <= t:
                value = v
            else:
                break
        return value

    @property
    def values(self) -> list[float]:
        return [v for _, v in self.steps]


@dataclass
class Link:
    id: str
    kind: LinkKind = LinkKind.ROAD
    length: float = 0.0
    lanes: float = 1.0
    cells: int = 0
    fd: FdCurve | None = None
    fd_name: str = ""
    up_links: list[str] = field(default_factory=list)
    down_links: list[str] = field(default_factory=list)
    type_up: JunctionType | None = None
    type_down: JunctionType | None = None
    commodities: list[int] = field(default_factory=list)

    @property
    def dx(self) -> float:
        return self.length / self.cells if self.cells else 0.0


@dataclass
class Junction:
    type: JunctionType
    upstream: list[str]
    downstream: list[str]
    scheme: jm.MergeScheme = field(default_factory=jm.Fairness)
    turning: list[list[float]] | None = None


@dataclass
class Commodity:
    id: str
    path: list[str]
    cyclic: bool = False


@dataclass
class Network:
    links: list[Link]
    junctions: list[Junction]
    commodities: list[Commodity]

    def __post_init__(self):
        self.link_index = {l.id: i for i, l in enumerate(self.links)}
        self._wire()

    def link(self, link_id: str) -> Link:
        return self.links[self.link_index[link_id]]

    @property
    def origins(self) -> list[Link]:
        return [l for l in self.links if l.kind == LinkKind.ORIGIN]

    @property
    def destinations(self) -> list[Link]:
        return [l for l in self.links if l.kind == LinkKind.DESTINATION]

    def _wire(self):
        for l in self.links:
            l.up_links, l.down_links, l.commodities = [], [], []
            l.type_up = l.type_down = None
        self._conflicts = []
        for j in self.junctions:
            for u in j.upstream:
                if u not in self.link_index:
                    continue
                link = self.link(u)
                if link.type_down is not None and link.type_down != j.type:
                    self._conflicts.append(f"link {u}: downstream end joined by two junctions")
                link.type_down = j.type
                link.down_links.extend(d for d in j.downstream)
            for d in j.downstream:
                if d not in self.link_index:
                    continue
                link = self.link(d)
                if link.type_up is not None and link.type_up != j.type:
                    self._conflicts.append(f"link {d}: upstream end joined by two junctions")
                link.type_up = j.type
                link.up_links.extend(u for u in j.upstream)
        for p, c in enumerate(self.commodities):
            for lid in c.path:
                if lid in self.link_index and p not in self.link(lid).commodities:
                    self.link(lid).commodities.append(p)

    def next_link(self, p: int, link_id: str) -> str | None:
        path = self.commodities[p].path
        if link_id not in path:
            return None
        i = path.index(link_id)
        if i + 1 < len(path):
            return path[i + 1]
        return path[0] if self.commodities[p].cyclic else None

    @property
    def has_free_diverge(self) -> bool:
        return any(j.type == JunctionType.DIVERGE_FREE for j in self.junctions)


def validate(net: Network) -> list[str]:
    """Structural diagnostics; an empty list means the network is usable."""
    diags: list[str] = list(getattr(net, "_conflicts", []))
    seen = set()
    for l in net.links:
        if l.id in seen:
            diags.append(f"link {l.id}: duplicate id")
        seen.add(l.id)
        if l.kind == LinkKind.ROAD:
            if l.cells < 1 or l.length <= 0 or l.lanes <= 0 or l.fd is None:
                diags.append(f"link {l.id}: needs cells >= 1, positive length and lanes, and a diagram")
        if l.kind == LinkKind.ORIGIN and l.up_links:
            diags.append(f"link {l.id}: origin has upstream links")
        if l.kind == LinkKind.DESTINATION and l.down_links:
            diags.append(f"link {l.id}: destination has downstream links")
        if l.kind == LinkKind.ROAD and (not l.up_links or not l.down_links):
            diags.append(f"link {l.id}: road link must connect at both ends")
    for j in net.junctions:
        for lid in j.upstream + j.downstream:
            if lid not in net.link_index:
                diags.append(f"junction references unknown link {lid}")
        nu, nd = len(j.upstream), len(j.downstream)
        shape_ok = {
            JunctionType.LINEAR: nu == 1 and nd == 1,
            JunctionType.MERGE: nu >= 2 and nd == 1,
            JunctionType.DIVERGE_PROPORTIONAL: nu == 1 and nd >= 2,
            JunctionType.DIVERGE_INSTANTANEOUS: nu == 1 and nd >= 2,
            JunctionType.DIVERGE_FREE: nu == 1 and nd >= 2,
            JunctionType.GENERAL: nu >= 1 and nd >= 1,
        }[j.type]
        if not shape_ok:
            diags.append(f"junction {j.type.value} {j.upstream}->{j.downstream}: wrong number of branches")
        if j.turning is not None:
            t = np.asarray(j.turning, dtype=float)
            if t.shape != (nu, nd) or np.any(np.abs(t.sum(axis=1) - 1) > 1e-9):
                diags.append(f"junction {j.upstream}->{j.downstream}: turning rows must sum to 1")
    for c in net.commodities:
        path = c.path
        if not path:
            diags.append(f"commodity {c.id}: empty path")
            continue
        for lid in path:
            if lid not in net.link_index:
                diags.append(f"commodity {c.id}: unknown link {lid}")
        if any(lid not in net.link_index for lid in path):
            continue
        if not c.cyclic:
            if net.link(path[0]).kind != LinkKind.ORIGIN:
                diags.append(f"commodity {c.id}: path does not start at an origin")
            if net.link(path[-1]).kind != LinkKind.DESTINATION:
                diags.append(f"commodity {c.id}: path does not end at a destination")
        pairs = list(zip(path[:-1], path[1:]))
        if c.cyclic:
            pairs.append((path[-1], path[0]))
        for a, b in pairs:
            if b not in net.link(a).down_links:
                diags.append(f"commodity {c.id}: disconnected path {a}->{b}")
    return diags


# ------------------------------------------------------------- scenario

@dataclass
class OriginSpec:
    link: str
    mode: str = "profile"  # "profile" or "neumann"
    total: Profile = field(default_factory=Profile)
    split: list[float] | None = None


@dataclass
class DestinationSpec:
    link: str
    mode: str = "profile"  # "profile", "neumann" or "free"
    supply: Profile = field(default_factory=Profile)


@dataclass
class ControlSpec:
    """Demand cap at the downstream end of ``link``.

    ``kind`` is ``"signal"`` (green ratio times capacity) or ``"meter"``
    (a release rate).
    """

    link: str
    kind: str
    schedule: Profile


@dataclass
class IncidentSpec:
    link: str
    first_cell: int
    last_cell: int
    t_start: float
    t_end: float
    lanes: float | None = None
    speed_factor: float | None = None


@dataclass
class InitialSpec:
    link: str
    density: float | dict = 0.0
    xi: list[float] | None = None


@dataclass
class ProbeSpec:
    link: str
    cell: int | None = None
    every: int = 1


@dataclass
class Scenario:
    network: Network
    dt: float
    steps: int
    origins: list[OriginSpec] = field(default_factory=list)
    destinations: list[DestinationSpec] = field(default_factory=list)
    controls: list[ControlSpec] = field(default_factory=list)
    incidents: list[IncidentSpec] = field(default_factory=list)
    initial: list[InitialSpec] = field(default_factory=list)
    probes: list[ProbeSpec] = field(default_factory=list)

    @property
    def horizon(self) -> float:
        return self.dt * self.steps


def cfl_number(sc: Scenario) -> float:
    """Largest characteristic speed times dt over dx, incidents included."""
    worst = 0.0
    for l in sc.network.links:
        if l.kind != LinkKind.ROAD:
            continue
        worst = max(worst, l.fd.max_wave_speed * sc.dt / l.dx)
        for inc in sc.incidents:
            if inc.link == l.id and inc.speed_factor:
                fd = l.fd.with_speed_factor(inc.speed_factor)
                worst = max(worst, fd.max_wave_speed * sc.dt / l.dx)
    return worst


def _cell_average(spec, x0: np.ndarray, x1: np.ndarray) -> np.ndarray:
    if isinstance(spec, (int, float)):
        return np.full(len(x0), float(spec))
    kind = spec.get("type", "sine")
    if kind == "constant":
        return np.full(len(x0), float(spec["value"]))
    if kind == "sine":
        mean = float(spec.get("mean", 0.0))
        amp = float(spec.get("amplitude", 0.0))
        k = 2 * math.pi / float(spec["period"])
        off = float(spec.get("offset", 0.0))
        avg = (np.cos(k * (x0 + off)) - np.cos(k * (x1 + off))) / (k * (x1 - x0))
        return mean + amp * avg
    if kind == "values":
        vals = np.asarray(spec["values"], dtype=float)
        if len(vals) != len(x0):
            raise ValueError("initial value list must have one entry per cell")
        return vals
    raise ValueError(f"unknown initial density type {kind!r}")


# ------------------------------------------------------------ artifacts

@dataclass
class ProbeSeries:
    link: str
    t: np.ndarray
    x: np.ndarray
    rho: np.ndarray       # (n_t, n_x)
    xi: np.ndarray        # (n_t, P, n_x)
    q: np.ndarray
    v: np.ndarray


@dataclass
class RunArtifacts:
    scenario: Scenario
    t: np.ndarray                      # K + 1 sample times
    link_flux: np.ndarray              # (K, n_links, 2, P) entry/exit commodity fluxes
    link_counts: np.ndarray            # (K + 1, n_links, P) vehicles on each road link
    max_change: np.ndarray             # (K,) max |delta rho| / (lanes rho_j) per step
    probes: dict[str, ProbeSeries]
    boundaries: dict[tuple[str, int], np.ndarray]   # (K, P) commodity fluxes at a face
    final_rho: dict[str, np.ndarray]
    final_xi: dict[str, np.ndarray]
    queues: dict[str, float]

    @property
    def dt(self) -> float:
        return self.scenario.dt

    def exit_flux(self, link_id: str) -> np.ndarray:
        i = self.scenario.network.link_index[link_id]
        return self.link_flux[:, i, 1, :]

    def entry_flux(self, link_id: str) -> np.ndarray:
        i = self.scenario.network.link_index[link_id]
        return self.link_flux[:, i, 0, :]


# ---------------------------------------------------------------- engine

class Simulator:
    """Vectorized state for one scenario; call :meth:`step` or :func:`run`."""

    def __init__(self, sc: Scenario, check_cfl: bool = True):
        diags = validate(sc.network)
        if diags:
            raise ValueError("invalid network: " + "; ".join(diags))
        if check_cfl:
            c = cfl_number(sc)
            if c > 1.0:
                raise CflError(f"CFL number {c:.4f} exceeds 1")
        self.sc = sc
        net = sc.network
        self.net = net
        self.P = max(len(net.commodities), 1)
        self._layout()
        self._initial_state()
        self._routing()
        self.t = 0.0
        self.k = 0
        self.queues = {o.link: 0.0 for o in sc.origins}

    # -- layout --
    def _layout(self):
        net = self.net
        cell_start, face_start = {}, {}
        c = f = 0
        lanes, dx, owner, fdidx = [], [], [], []
        self.fds: list[FdCurve] = []
        for li, l in enumerate(net.links):
            face_start[l.id] = f
            if l.kind == LinkKind.ROAD:
                cell_start[l.id] = c
                if l.fd not in self.fds:
                    self.fds.append(l.fd)
                lanes += [l.lanes] * l.cells
                dx += [l.dx] * l.cells
                owner += [li] * l.cells
                fdidx += [self.fds.index(l.fd)] * l.cells
                c += l.cells
                f += l.cells + 1
            else:
                f += 2
        self.n_cells, self.n_faces = c, f
        self.cell_start, self.face_start = cell_start, face_start
        self.base_lanes = np.array(lanes, dtype=float)
        self.lanes = self.base_lanes.copy()
        self.dx = np.array(dx, dtype=float)
        self.owner = np.array(owner, dtype=int)
        self.base_fd_index = np.array(fdidx, dtype=int)
        self.cell_fd = [self.fds[i] for i in fdidx]
        self._regroup(self.cell_fd)

        face_in = np.empty(c, dtype=int)
        face_out = np.empty(c, dtype=int)
        up, dn, faces = [], [], []
        for l in net.links:
            if l.kind != LinkKind.ROAD:
                continue
            cs, fs = cell_start[l.id], face_start[l.id]
            idx = np.arange(l.cells)
            face_in[cs + idx] = fs + idx
            face_out[cs + idx] = fs + idx + 1
            up += list(cs + idx[:-1])
            dn += list(cs + idx[1:])
            faces += list(fs + idx[1:])
        self.face_in, self.face_out = face_in, face_out
        self.int_up = np.array(up, dtype=int)
        self.int_dn = np.array(dn, dtype=int)
        self.int_face = np.array(faces, dtype=int)
        self.rho_j_cell = np.array([fd.rho_j for fd in self.cell_fd]) * self.base_lanes

    def _regroup(self, cell_fd: list[FdCurve]):
        groups: dict[FdCurve, list[int]] = {}
        for i, fd in enumerate(cell_fd):
            groups.setdefault(fd, []).append(i)
        self.groups = [(fd, np.array(ix, dtype=int)) for fd, ix in groups.items()]
        self.cell_fd = list(cell_fd)

    def entry_face(self, link_id: str) -> int:
        return self.face_start[link_id]

    def exit_face(self, link_id: str) -> int:
        l = self.net.link(link_id)
        return self.face_start[link_id] + (l.cells if l.kind == LinkKind.ROAD else 1)

    def first_cell(self, link_id: str) -> int:
        return self.cell_start[link_id]

    def last_cell(self, link_id: str) -> int:
        return self.cell_start[link_id] + self.net.link(link_id).cells - 1

    def link_cells(self, link_id: str) -> slice:
        s = self.cell_start[link_id]
        return slice(s, s + self.net.link(link_id).cells)

    def _initial_state(self):
        self.rho = np.zeros(self.n_cells)
        self.xi = np.zeros((self.P, self.n_cells))
        for l in self.net.links:
            if l.kind != LinkKind.ROAD:
                continue
            sl = self.link_cells(l.id)
            default = np.zeros(self.P)
            if l.commodities:
                default[l.commodities] = 1.0 / len(l.commodities)
            else:
                default[0] = 1.0
            self.xi[:, sl] = default[:, None]
        for init in self.sc.initial:
            l = self.net.link(init.link)
            sl = self.link_cells(l.id)
            x0 = np.arange(l.cells) * l.dx
            self.rho[sl] = _cell_average(init.density, x0, x0 + l.dx)
            if init.xi is not None:
                xi = np.asarray(init.xi, dtype=float)
                if len(xi) != self.P or abs(xi.sum() - 1) > 1e-9:
                    raise ValueError(f"initial proportions on {l.id} must have {self.P} entries summing to 1")
                self.xi[:, sl] = xi[:, None]
        if np.any(self.rho < 0) or np.any(self.rho > self.rho_j_cell * (1 + 1e-12)):
            raise ValueError("initial densities outside [0, lanes * rho_j]")

    def _routing(self):
        net = self.net
        self.origin_spec = {o.link: o for o in self.sc.origins}
        self.dest_spec = {d.link: d for d in self.sc.destinations}
        self.controls = [(c, self.last_cell(c.link)) for c in self.sc.controls]
        self.routes = []
        for j in net.junctions:
            table = {}
            for u in j.upstream:
                r = np.full(self.P, -1, dtype=int)
                for p in range(len(net.commodities)):
                    nxt = net.next_link(p, u)
                    if nxt in j.downstream:
                        r[p] = j.downstream.index(nxt)
                table[u] = r
            self.routes.append(table)
        self.eps_rho = 1e-9 * self.rho_j_cell

    # -- boundary data --
    def _sender(self, link_id: str, D: np.ndarray, tm: float):
        l = self.net.link(link_id)
        if l.kind == LinkKind.ROAD:
            c = self.last_cell(link_id)
            return D[c], self.xi[:, c]
        spec = self.origin_spec.get(link_id)
        down = l.down_links[0]
        c = self.first_cell(down) if self.net.link(down).kind == LinkKind.ROAD else None
        if spec is None:
            return 0.0, np.eye(self.P)[0]
        if spec.mode == "neumann":
            return D[c], self.xi[:, c]
        if spec.split is not None:
            xi = np.asarray(spec.split, dtype=float)
        else:
            xi = np.eye(self.P)[0]
        return spec.total(tm), xi

    def _receiver(self, link_id: str, S: np.ndarray, tm: float) -> float:
        l = self.net.link(link_id)
        if l.kind == LinkKind.ROAD:
            return S[self.first_cell(link_id)]
        spec = self.dest_spec.get(link_id)
        if spec is None or spec.mode == "free":
            return math.inf
        if spec.mode == "neumann":
            up = l.up_links[0]
            return S[self.last_cell(up)]
        return spec.supply(tm)

    def _apply_incidents(self, tm: float):
        active = [inc for inc in self.sc.incidents if inc.t_start <= tm < inc.t_end]
        key = tuple(id(a) for a in active)
        if getattr(self, "_incident_key", ()) == key:
            return
        self._incident_key = key
        lanes = self.base_lanes.copy()
        fds = [self.fds[i] for i in self.base_fd_index]
        for inc in active:
            s = self.cell_start[inc.link]
            for c in range(s + inc.first_cell, s + inc.last_cell + 1):
                if inc.lanes is not None:
                    lanes[c] = inc.lanes
                if inc.speed_factor is not None:
                    fds[c] = fds[c].with_speed_factor(inc.speed_factor)
        self.lanes = lanes
        self._regroup(fds)

    # -- one step --
    def demand_supply(self) -> tuple[np.ndarray, np.ndarray]:
        D = np.empty(self.n_cells)
        S = np.empty(self.n_cells)
        for fd, ix in self.groups:
            a, r = self.lanes[ix], self.rho[ix]
            D[ix] = fd.raw_demand(a, r)
            S[ix] = fd.raw_supply(a, r)
        return D, S

    def step(self):
        sc, net, P = self.sc, self.net, self.P
        tm = self.t  # profiles are sampled at the start of the step
        if sc.incidents:
            self._apply_incidents(tm)
        D, S = self.demand_supply()
        for ctl, c in self.controls:
            fd = self.cell_fd[c]
            if ctl.kind == "signal":
                D[c] = jm.signal_demand(D[c], ctl.schedule(tm), fd.lane_capacity * self.lanes[c])
            else:
                D[c] = jm.metered_demand(D[c], ctl.schedule(tm))

        F = np.zeros(self.n_faces)
        Fp = np.zeros((P, self.n_faces))
        f_int = np.minimum(D[self.int_up], S[self.int_dn])
        F[self.int_face] = f_int
        Fp[:, self.int_face] = f_int * self.xi[:, self.int_up]

        for j, route in zip(net.junctions, self.routes):
            self._junction(j, route, D, S, tm, F, Fp)

        # conservative update
        lam = sc.dt / self.dx
        rho_p = self.rho * self.xi
        rho_p_new = rho_p + lam * (Fp[:, self.face_in] - Fp[:, self.face_out])
        rho_new = self.rho + lam * (F[self.face_in] - F[self.face_out])
        floor = -1e-12 * self.rho_j_cell
        bad = np.nonzero(rho_new < floor)[0]
        if bad.size:
            c = int(bad[0])
            raise ConsistencyError(
                f"negative density {rho_new[c]:.3e} in cell {c - self.cell_start[net.links[self.owner[c]].id]}"
                f" of link {net.links[self.owner[c]].id} at step {self.k}")
        with np.errstate(divide="ignore", invalid="ignore"):
            xi_new = np.where(rho_new > self.eps_rho, rho_p_new / rho_new, self.xi)
        change = np.max(np.abs(rho_new - self.rho) / self.rho_j_cell) if self.n_cells else 0.0
        self.rho, self.xi = rho_new, xi_new
        self.t += sc.dt
        self.k += 1
        self.F, self.Fp = F, Fp
        return change

    def _junction(self, j: Junction, route, D, S, tm, F, Fp):
        P = self.P
        ups = [self._sender(u, D, tm) for u in j.upstream]
        sups = [self._receiver(d, S, tm) for d in j.downstream]
        out_p = np.zeros((len(ups), P))   # commodity outflow of each upstream link
        in_p = np.zeros((len(sups), P))   # commodity inflow of each downstream link
        t = j.type

        if t == JunctionType.LINEAR:
            (d_u, xi_u), s_d = ups[0], sups[0]
            f = min(d_u, s_d)
            out_p[0] = f * xi_u
            in_p[0] = out_p[0]
        elif t == JunctionType.MERGE:
            s_d = sups[0]
            demands = [d for d, _ in ups]
            if math.isinf(s_d):
                shares = demands
            else:
                _, shares = jm.merge_flux(demands, s_d, j.scheme)
            for i, ((_, xi_u), q) in enumerate(zip(ups, shares)):
                out_p[i] = q * xi_u
            in_p[0] = out_p.sum(axis=0)
        elif t in (JunctionType.DIVERGE_PROPORTIONAL, JunctionType.DIVERGE_INSTANTANEOUS):
            d_u, xi_u = ups[0]
            r = route[j.upstream[0]]
            carried = xi_u > 0
            if np.any(r[carried] < 0):
                raise ConsistencyError(f"commodity without a route at diverge after {j.upstream[0]}")
            frac = np.array([xi_u[r == k].sum() for k in range(len(sups))])
            if t == JunctionType.DIVERGE_PROPORTIONAL:
                frac = frac / frac.sum() if frac.sum() > 0 else frac
                out = d_u
                for s, x in zip(sups, frac):
                    if x > 0:
                        out = min(out, s / x)
                out_p[0] = out * xi_u
            else:
                c = self.last_cell(j.upstream[0])
                rho_tot = min(self.rho[c], self.lanes[c] * self.cell_fd[c].rho_j)
                a, fd = self.lanes[c], self.cell_fd[c]
                for k, s in enumerate(sups):
                    mask = r == k
                    share = xi_u[mask].sum()
                    if share <= 0:
                        continue
                    own = rho_tot * share
                    ps = jm.PartialState(own, max(rho_tot - own, 0.0), fd, a)
                    q = min(s, jm.partial_demand(ps))
                    out_p[0, mask] = q * xi_u[mask] / share
            for p in range(P):
                if out_p[0, p] > 0:
                    in_p[r[p], p] += out_p[0, p]
        elif t == JunctionType.DIVERGE_FREE:
            d_u, xi_u = ups[0]
            if any(math.isinf(s) for s in sups):
                free = [k for k, s in enumerate(sups) if math.isinf(s)]
                shares = [d_u / len(free) if k in free else 0.0 for k in range(len(sups))]
                out = d_u
            else:
                out, shares = jm.diverge_flux_free(d_u, sups)
            out_p[0] = out * xi_u
            for k, q in enumerate(shares):
                in_p[k] = q * xi_u
        else:  # general
            demands = [d for d, _ in ups]
            total_demand = sum(demands)
            if j.turning is not None:
                turn = np.asarray(j.turning, dtype=float)
            else:
                turn = np.zeros((len(ups), len(sups)))
                for i, (u, (_, xi_u)) in enumerate(zip(j.upstream, ups)):
                    r = route[u]
                    for k in range(len(sups)):
                        turn[i, k] = xi_u[r == k].sum()
                    row = turn[i].sum()
                    turn[i] = turn[i] / row if row > 0 else np.eye(len(sups))[0]
            sups_f = [s if not math.isinf(s) else 1e300 for s in sups]
            if total_demand > 0:
                _, per_up, _ = jm.general_junction_flux(demands, sups_f, turn)
            else:
                per_up = [0.0] * len(ups)
            for i, (u, (_, xi_u)) in enumerate(zip(j.upstream, ups)):
                out_p[i] = per_up[i] * xi_u
                if j.turning is not None:
                    for k in range(len(sups)):
                        in_p[k] += out_p[i] * turn[i, k]
                else:
                    r = route[u]
                    for p in range(P):
                        if out_p[i, p] > 0:
                            in_p[r[p], p] += out_p[i, p]

        for i, u in enumerate(j.upstream):
            fo = self.exit_face(u)
            Fp[:, fo] = out_p[i]
            F[fo] = out_p[i].sum()
            if u in self.origin_spec:
                spec = self.origin_spec[u]
                if spec.mode != "neumann":
                    want = spec.total(tm)
                    self.queues[u] += (want - F[fo]) * self.sc.dt
                    fi = self.entry_face(u)
                    F[fi] = want
                    Fp[:, fi] = want * (np.asarray(spec.split) if spec.split is not None else np.eye(P)[0])
                else:
                    F[self.entry_face(u)] = F[fo]
                    Fp[:, self.entry_face(u)] = out_p[i]
        for k, d in enumerate(j.downstream):
            fi = self.entry_face(d)
            Fp[:, fi] = in_p[k]
            F[fi] = in_p[k].sum()
            if self.net.link(d).kind == LinkKind.DESTINATION:
                Fp[:, self.exit_face(d)] = in_p[k]
                F[self.exit_face(d)] = F[fi]

    def link_vehicles(self) -> np.ndarray:
        """(n_links, P) vehicles currently on each road link."""
        out = np.zeros((len(self.net.links), self.P))
        veh = self.rho * self.xi * self.dx
        for li, l in enumerate(self.net.links):
            if l.kind == LinkKind.ROAD:
                out[li] = veh[:, self.link_cells(l.id)].sum(axis=1)
        return out


def run(sc: Scenario, probes: Sequence[ProbeSpec] | None = None,
        boundaries: Sequence[tuple[str, int]] = (), check_cfl: bool = True) -> RunArtifacts:
    """Advance ``sc.steps`` steps and collect fluxes, counts and probe series."""
    sim = Simulator(sc, check_cfl=check_cfl)
    net = sc.network
    K, P, L = sc.steps, sim.P, len(net.links)
    probes = list(sc.probes if probes is None else probes)

    entry_faces = np.array([sim.entry_face(l.id) for l in net.links])
    exit_faces = np.array([sim.exit_face(l.id) for l in net.links])
    link_flux = np.zeros((K, L, 2, P))
    link_counts = np.zeros((K + 1, L, P))
    link_counts[0] = sim.link_vehicles()
    max_change = np.zeros(K)
    bfaces = [(lid, i, sim.face_start[lid] + i) for lid, i in boundaries]
    bvals = {(lid, i): np.zeros((K, P)) for lid, i, _ in bfaces}

    probe_rows: dict[int, list] = {n: [] for n in range(len(probes))}
    probe_t: dict[int, list] = {n: [] for n in range(len(probes))}

    def snap(n, pr):
        sl = sim.link_cells(pr.link)
        idx = np.arange(sl.start, sl.stop)
        if pr.cell is not None:
            idx = idx[[pr.cell]]
        probe_rows[n].append((sim.rho[idx].copy(), sim.xi[:, idx].copy(), idx))
        probe_t[n].append(sim.t)

    for n, pr in enumerate(probes):
        snap(n, pr)
    for k in range(K):
        max_change[k] = sim.step()
        link_flux[k, :, 0, :] = sim.Fp[:, entry_faces].T
        link_flux[k, :, 1, :] = sim.Fp[:, exit_faces].T
        link_counts[k + 1] = sim.link_vehicles()
        for lid, i, f in bfaces:
            bvals[(lid, i)][k] = sim.Fp[:, f]
        for n, pr in enumerate(probes):
            if (k + 1) % max(pr.every, 1) == 0:
                snap(n, pr)

    series = {}
    for n, pr in enumerate(probes):
        link = net.link(pr.link)
        rows = probe_rows[n]
        idx = rows[0][2]
        rho = np.array([r for r, _, _ in rows])
        xi = np.array([x for _, x, _ in rows])
        local = idx - sim.cell_start[pr.link]
        x = (local + 0.5) * link.dx
        a = sim.base_lanes[idx]
        v = link.fd.lane_speed(rho / a)
        name = pr.link if pr.cell is None else f"{pr.link}:{pr.cell}"
        series[name] = ProbeSeries(pr.link, np.array(probe_t[n]), x, rho, xi, rho * v, v)

    final_rho = {l.id: sim.rho[sim.link_cells(l.id)].copy() for l in net.links if l.kind == LinkKind.ROAD}
    final_xi = {l.id: sim.xi[:, sim.link_cells(l.id)].copy() for l in net.links if l.kind == LinkKind.ROAD}
    t = np.arange(K + 1) * sc.dt
    return RunArtifacts(sc, t, link_flux, link_counts, max_change, series, bvals,
                        final_rho, final_xi, dict(sim.queues))
