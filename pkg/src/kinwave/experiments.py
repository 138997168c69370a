"""Built-in experiments: measure each scenario and compare with expected values.

Every experiment turns one built-in scenario (sometimes several variants of
it) into a dictionary of named measurements. :func:`verify` checks those
measurements against the table in ``data/expected.json`` and returns a
verdict per scenario. Measurements are deterministic, so the verdict JSON of
two invocations is identical.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import analysis as an
from . import mixed_traffic as mt
from . import network as nw
from . import scenarios as sc


@dataclass
class Metric:
    """One measured value and its check.

    ``mode`` is ``rel`` (|v - e| <= tol |e|), ``abs`` (|v - e| <= tol),
    ``max`` (v <= tol), ``min`` (v >= tol), ``range`` (e[0] <= v <= e[1])
    or ``true`` (v is truthy).
    """

    name: str
    value: float | bool | None
    expected: float | list | None
    tol: float | None
    mode: str

    @property
    def passed(self) -> bool:
        v, e, tol = self.value, self.expected, self.tol
        if v is None:
            return False
        if self.mode == "true":
            return bool(v)
        if not np.isfinite(v):
            return False
        if self.mode == "rel":
            return abs(v - e) <= tol * abs(e)
        if self.mode == "abs":
            return abs(v - e) <= tol
        if self.mode == "max":
            return v <= tol
        if self.mode == "min":
            return v >= tol
        if self.mode == "range":
            return e[0] <= v <= e[1]
        raise ValueError(f"unknown check mode {self.mode!r}")

    @property
    def delta(self) -> float | None:
        if self.mode in ("rel", "abs") and isinstance(self.value, (int, float)):
            return float(self.value - self.expected)
        return None

    def as_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["value"], (np.floating, np.bool_)):
            d["value"] = d["value"].item()
        d["delta"] = self.delta
        d["verdict"] = "PASS" if self.passed else "FAIL"
        return d


@dataclass
class Verdict:
    scenario: str
    metrics: list[Metric] = field(default_factory=list)
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and bool(self.metrics) and all(m.passed for m in self.metrics)

    def as_dict(self) -> dict:
        return {"scenario": self.scenario, "verdict": "PASS" if self.passed else "FAIL",
                "error": self.error, "metrics": [m.as_dict() for m in self.metrics]}

    def lines(self) -> list[str]:
        if self.error:
            return [f"FAIL {self.scenario}: {self.error}"]
        out = []
        for m in self.metrics:
            tag = "PASS" if m.passed else "FAIL"
            extra = f" (delta {m.delta:+.3g})" if m.delta is not None and not m.passed else ""
            crit = " ".join([m.mode] + ([_fmt(m.expected)] if m.expected is not None else [])
                            + ([f"tol {_fmt(m.tol)}"] if m.tol is not None else []))
            out.append(f"{tag} {self.scenario} {m.name} = {_fmt(m.value)} [{crit}]{extra}")
        return out


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return f"{x:.6g}"
    if isinstance(x, list):
        return "[" + ", ".join(_fmt(v) for v in x) + "]"
    return str(x)


# ------------------------------------------------------------- helpers

def _run(scenario_id: str, overrides: tuple[str, ...] = (), probes=None):
    doc = sc.apply_overrides(sc.load_builtin(scenario_id), list(overrides))
    built = sc.build(doc)
    return built, nw.run(built.scenario, probes=probes)


def _rho_j(built, link_id: str) -> float:
    return built.scenario.network.link(link_id).fd.rho_j


def link_flow(built, link_id: str, rho: np.ndarray) -> np.ndarray:
    link = built.scenario.network.link(link_id)
    return rho * link.fd.lane_speed(rho / link.lanes)


def equilibrium_travel_times(built, final_rho: dict[str, np.ndarray]) -> list[float]:
    """Travel time of each commodity through a frozen density field."""
    net = built.scenario.network
    times = []
    for c in net.commodities:
        total = 0.0
        for lid in c.path:
            link = net.link(lid)
            if link.kind != nw.LinkKind.ROAD:
                continue
            v = link.fd.lane_speed(final_rho[lid] / link.lanes)
            total += float(np.sum(link.dx / v))
        times.append(total)
    return times


def _network_att(run) -> list[float]:
    net = run.scenario.network
    origin, dest = net.origins[0].id, net.destinations[0].id
    up = an.n_curve(run.exit_flux(origin), run.dt)
    down = an.n_curve(run.entry_flux(dest), run.dt)
    return [an.travel_time_report(up.commodity(p), down.commodity(p), p).att
            for p in range(len(net.commodities))]


def _fitted_rate(resolutions, errors) -> float:
    return float(-np.polyfit(np.log(resolutions), np.log(errors), 1)[0])


# --------------------------------------------------------- measurements

def measure_merge(scenario_id: str = "ch3-merge") -> dict:
    built, run = _run(scenario_id)
    rj = _rho_j(built, "u1")
    return {"rho_B": run.final_rho["u1"][-1] / rj,
            "rho_E": run.final_rho["u2"][-1] / rj,
            "rho_C": run.final_rho["d"][0] / rj,
            "q_B": run.exit_flux("u1")[-1].sum() / rj,
            "q_E": run.exit_flux("u2")[-1].sum() / rj}


def measure_merge_metered() -> dict:
    built, run = _run("ch3-merge-metered")
    _, plain = _run("ch3-merge")
    rj = _rho_j(built, "u1")
    return {"rho_B": run.final_rho["u1"][-1] / rj,
            "rho_E": run.final_rho["u2"][-1] / rj,
            "downstream_difference": float(np.max(np.abs(run.final_rho["d"] - plain.final_rho["d"])) / rj)}


MERGE_RESOLUTIONS = (64, 128, 256, 512, 1024)


def measure_merge_convergence(resolutions=MERGE_RESOLUTIONS) -> dict:
    solutions = []
    for n in resolutions:
        built, run = _run("ch3-converge", (f"numerics.cells={n}",))
        rj = _rho_j(built, "u1")
        solutions.append(np.concatenate([run.final_rho[k] / rj for k in ("u1", "u2", "d")]))
    report = an.convergence_rate(solutions, "L1")
    out = {"fitted_rate": _fitted_rate(report.resolutions[:-1], report.errors)}
    out.update({f"rate_{n}": r for n, r in zip(report.resolutions[1:-1], report.rates)})
    return out


def measure_diverge_general() -> dict:
    built, run = _run("ch4-diverge-general")
    rj = _rho_j(built, "u")
    q_b = run.exit_flux("u").sum(axis=1)
    q_c = run.entry_flux("d1").sum(axis=1)
    q_e = run.entry_flux("d2").sum(axis=1)
    return {"rho_B": run.final_rho["u"][-1] / rj,
            "rho_C": run.final_rho["d1"][0] / rj,
            "rho_E": run.final_rho["d2"][0] / rj,
            "qC_over_qB": q_c[-1] / q_b[-1],
            "conservation_error": float(np.max(np.abs(q_b - q_c - q_e)) / rj)}


def shock_speed(t: np.ndarray, x: np.ndarray, rho: np.ndarray, level: float,
                t_range: tuple[float, float]) -> float:
    """Fitted speed of the upstream-most crossing of ``level``."""
    pos = np.full(len(t), np.nan)
    for k in range(len(t)):
        above = np.nonzero(rho[k] >= level)[0]
        if above.size:
            pos[k] = x[above[0]]
    keep = (t > t_range[0]) & (t < t_range[1]) & np.isfinite(pos)
    return float(np.polyfit(t[keep], pos[keep], 1)[0])


def measure_diverge_extreme() -> dict:
    built, run = _run("ch4-diverge-extreme")
    rj = _rho_j(built, "u")
    p = run.probes["u"]
    rho = p.rho / rj
    jam = 2.0
    ahead = float(np.median(rho[0]))
    speed = shock_speed(p.t, p.x, rho, 0.5 * (ahead + jam), (0.1 * p.t[-1], 0.8 * p.t[-1]))
    return {"max_density": float(rho.max()), "shock_speed": speed}


def measure_mixed_ring() -> dict:
    doc = sc.load_builtin("ch5-mixed-ring")
    m = doc["mixed"]
    params = mt.MixedParams(m["vf"], m["l1"], m["l2"], m["tau1"], m["tau2"])
    cells, steps, dt = sc.numerics_of(doc)
    length = float(m["length"])
    _, rho0 = mt.sinusoidal_ring(params, cells, length, m["base"], m["amplitude"])
    dx = length / cells
    ring = mt.run_ring(rho0, params, dx, dt, steps, save_every=5)
    _, speed = mt.minimum_speed_track(ring)
    mass = ring.rho.sum(axis=1) * dx
    drift = float(np.max(np.abs(mass - mass[0]) / mass[0]))
    paths = mt.track_trajectories(ring, ring.x[::10])
    return {"wave_speed": speed, "class_mass_drift": drift,
            "min_contour_gap": float(np.diff(paths, axis=1).min())}


def measure_network() -> dict:
    _, run = _run("ch6-network")
    att = _network_att(run)
    return {"ATT0": att[0], "ATT1": att[1]}


NETWORK_RESOLUTIONS = (200, 400, 800, 1600)


def measure_network_convergence(resolutions=NETWORK_RESOLUTIONS) -> dict:
    atts = np.array([_network_att(_run("ch6-converge", (f"numerics.cells={n}",))[1])
                     for n in resolutions])
    out = {}
    for p in range(atts.shape[1]):
        report = an.convergence_rate(list(atts[:, p]), "L1")
        rates = [float(r) for r in report.rates]
        out[f"rate_min_{p}"] = min(rates)
        out[f"rate_max_{p}"] = max(rates)
    return out


def equilibrium_table_row(xi: float) -> dict[str, tuple[float, float]]:
    """Expected (rho/rho_j, q/q_c) of links 2 to 5 away from xi = 0.5."""
    if xi < 0.5:
        l3, l4 = (0.4 * xi, 2 * xi), (0.4 + 1.6 * xi, 2 * (1 - xi))
    else:
        l3, l4 = (2 - 1.6 * xi, 2 * xi), (0.4 * (1 - xi), 2 * (1 - xi))
    return {"2": (1.4, 2.0), "3": l3, "4": l4, "5": (0.4, 2.0)}


def equilibrium_att(xi: float) -> float:
    return 2 + 2.7692 * xi if xi < 0.5 else 3.5385 - 1.8462 * xi


def equilibrium_row(doc: dict) -> dict:
    """Run one document; report equilibrium timing, link medians and travel times.

    Densities are divided by the jam density and flows by the lane capacity
    of each link's diagram.
    """
    built = sc.build(doc)
    run = nw.run(built.scenario)
    reached, t_eq = an.equilibrium_from_changes(run.max_change, run.dt)
    row = {"reached": reached, "t_eq": t_eq}
    for lid, rho in run.final_rho.items():
        fd = built.scenario.network.link(lid).fd
        row[f"rho_{lid}"] = float(np.median(rho)) / fd.rho_j
        row[f"q_{lid}"] = float(np.median(link_flow(built, lid, rho))) / fd.lane_capacity
    times = equilibrium_travel_times(built, run.final_rho)
    for p, t in enumerate(times):
        row[f"ATT{p}"] = t
    split = built.scenario.origins[0].split if built.scenario.origins else None
    if split and len(split) == len(times):
        row["ATT"] = float(np.dot(split, times))
    return row


def run_equilibrium(xi: float, overrides: tuple[str, ...] = ()) -> dict:
    doc = sc.apply_overrides(sc.load_builtin(f"ch7-equilibrium({xi!r})"), list(overrides))
    return {"xi": xi, **equilibrium_row(doc)}


def _sweep_worker(args) -> dict:
    text, path, value = args
    doc = sc.set_path(sc.parse(text), path, value)
    sc.apply_overrides(doc, [])
    return {path: value, **equilibrium_row(doc)}


def sweep(doc: dict, path: str, values, jobs: int = 1) -> list[dict]:
    """One equilibrium row per parameter value, optionally in parallel processes."""
    root = path.split(".")[0]
    if path != "xi" and root not in sc.SCHEMA["properties"]:
        raise sc.SchemaError(f"unknown parameter path {path!r}")
    values = list(values)
    if not values:
        return []
    for v in values:
        sc.apply_overrides(sc.set_path(doc, path, v), [])
    tasks = [(sc.serialize(doc), path, v) for v in values]
    if jobs <= 1:
        return [_sweep_worker(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_sweep_worker, tasks))


EQUILIBRIUM_XI = (0.1, 0.2, 0.3, 0.4, 0.6, 0.7, 0.8, 0.9)


def measure_equilibrium(xis=EQUILIBRIUM_XI) -> dict:
    out = {}
    worst = 0.0
    for xi in xis:
        row = run_equilibrium(xi)
        worst = max(worst, abs(row["ATT"] - equilibrium_att(xi)) / equilibrium_att(xi))
        if xi in (0.4, 0.6):
            for lid, (rho, q) in equilibrium_table_row(xi).items():
                out[f"xi{xi}_rho_{lid}"] = row[f"rho_{lid}"] / rho
                out[f"xi{xi}_q_{lid}"] = row[f"q_{lid}"] / q
    out["ATT_sweep_max_rel_error"] = worst
    return out


def measure_periodic() -> dict:
    built, run = _run("ch7-periodic(0.45)", probes=[nw.ProbeSpec("2", -1, 1)])
    fd = built.scenario.network.link("2").fd
    p = run.probes["2:-1"]
    rho = p.rho[:, 0] / fd.rho_j
    q = p.q[:, 0] / fd.lane_capacity
    fit = an.fit_periodic(p.t, rho)
    late = p.t >= 0.4 * p.t[-1]
    # longer horizon at the same step size so the stable case can settle
    _, calm = _run("ch7-periodic(0.25)", ("numerics.horizon=4.2", "numerics.steps=24000"))
    reached, _ = an.equilibrium_from_changes(calm.max_change, calm.dt)
    return {"period": fit.period if fit.ok else float("nan"),
            "mean_q_link2": float(q[late].mean()),
            "xi0.25_reaches_equilibrium": reached}


def measure_ring(scenario_id: str) -> dict:
    built, run = _run(scenario_id)
    net = built.scenario.network
    link_b = net.link("B")
    capacity = link_b.fd.capacity(link_b.lanes)
    inflow = run.entry_flux("B").sum(axis=1)
    late = inflow[len(inflow) // 2:]
    total = run.link_counts.sum(axis=(1, 2))
    return {"throughput_over_capacity": float(late.mean() / capacity),
            "mass_drift": float(np.max(np.abs(total - total[0])) / total[0])}


EXPERIMENTS: dict[str, Callable[[], dict]] = {
    "ch2-ring-homogeneous": lambda: measure_ring("ch2-ring-homogeneous"),
    "ch2-ring-bottleneck": lambda: measure_ring("ch2-ring-bottleneck"),
    "ch3-merge": measure_merge,
    "ch3-merge-metered": measure_merge_metered,
    "ch3-converge": measure_merge_convergence,
    "ch4-diverge-general": measure_diverge_general,
    "ch4-diverge-extreme": measure_diverge_extreme,
    "ch5-mixed-ring": measure_mixed_ring,
    "ch6-network": measure_network,
    "ch6-converge": measure_network_convergence,
    "ch7-equilibrium": measure_equilibrium,
    "ch7-periodic": measure_periodic,
}


def check(scenario_id: str, measured: dict, table: dict | None = None) -> Verdict:
    """Compare measurements with the expected-values table."""
    table = sc.expected_values() if table is None else table
    verdict = Verdict(scenario_id)
    for name, spec in table[scenario_id].items():
        value = measured.get(name)
        if isinstance(value, (np.floating, np.integer)):
            value = value.item()
        verdict.metrics.append(Metric(name, value, spec.get("expected"), spec.get("tol"), spec["mode"]))
    return verdict


def verify_one(scenario_id: str) -> Verdict:
    base = sc.load_builtin(scenario_id)["id"].split("(")[0]
    if base not in EXPERIMENTS:
        return Verdict(scenario_id, error="no experiment defined")
    try:
        measured = EXPERIMENTS[base]()
    except (nw.ConsistencyError, nw.CflError, an.AnalysisError, ValueError) as exc:
        return Verdict(base, error=f"{type(exc).__name__}: {exc}")
    return check(base, measured)


def verify(ids: list[str]) -> list[Verdict]:
    if ids == ["all"] or "all" in ids:
        ids = list(EXPERIMENTS)
    return [verify_one(i) for i in ids]


def report_json(verdicts: list[Verdict]) -> str:
    body = {"verdict": "PASS" if all(v.passed for v in verdicts) else "FAIL",
            "scenarios": [v.as_dict() for v in verdicts]}
    return json.dumps(body, indent=2, sort_keys=True, allow_nan=True) + "\n"
