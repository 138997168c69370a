"""Command-line front end: ``kinwave simulate|riemann|verify|sweep``.

Exit codes: 0 success, 1 a verify check failed, 2 scenario or input error,
3 CFL number above one, 4 runtime consistency failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis as an
from . import experiments as ex
from . import junction_models as jm
from . import mixed_traffic as mt
from . import network as nw
from . import riemann_link as rl
from . import scenarios as sc
from .fundamental_diagram import fd_from_spec

EXIT_FAIL, EXIT_SCHEMA, EXIT_CFL, EXIT_CONSISTENCY = 1, 2, 3, 4

DEFAULT_FD = {"type": "triangular", "rho_j": 1.0, "vf": 1.0, "rho_c": 0.2}


def _num(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".17g")


def _unit_labels(doc: dict) -> dict[str, str]:
    if doc.get("model") == "mixed-ring":
        return {"t": "s", "x": "ft", "rho": "veh/ft", "q": "veh/s", "v": "ft/s", "N": "veh"}
    if doc.get("units", {}).get("system") == "miles_hours":
        return {"t": "h", "x": "mi", "rho": "veh/mi", "q": "veh/h", "v": "mi/h", "N": "veh"}
    return {"t": "tau", "x": "l", "rho": "veh/l", "q": "veh/tau", "v": "l/tau", "N": "veh"}


class Writer:
    """Writes tables as CSV (header row, unit row, 17-digit floats) or JSON."""

    def __init__(self, out: Path, fmt: str):
        self.out, self.fmt = out, fmt
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def table(self, name: str, columns: list[str], units: list[str], rows) -> None:
        rows = [[_num(v) for v in r] for r in rows]
        if self.fmt == "json":
            path = self.out / f"{name}.json"
            body = {"columns": columns, "units": units,
                    "rows": [[json.loads(v) if v not in ("inf", "-inf", "nan") else v for v in r]
                             for r in rows]}
            path.write_text(json.dumps(body) + "\n")
        else:
            path = self.out / f"{name}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(columns)
                w.writerow(units)
                w.writerows(rows)
        self.files.append(path.name)


def _load_doc(args) -> dict:
    doc = sc.load(args.scenario)
    doc = sc.apply_overrides(doc, args.set or [])
    for item in args.probe or []:
        link, _, cell = item.partition(":")
        probe = {"link": link}
        if cell:
            probe["cell"] = int(cell)
        doc.setdefault("probes", []).append(probe)
    return sc.apply_overrides(doc, [])


def _simulate_network(doc: dict, writer: Writer, labels: dict) -> dict:
    built = sc.build(doc)
    scen = built.scenario
    cfl = nw.cfl_number(scen)
    if cfl > 1.0:
        raise nw.CflError(f"CFL number {cfl:.6g} exceeds 1")
    run = nw.run(scen, boundaries=built.boundaries)
    names = [c.id for c in scen.network.commodities]
    lu = labels

    for name, p in run.probes.items():
        cols = ["t", "x", "rho", "q", "v"] + [f"xi_{c}" for c in names]
        units = [lu["t"], lu["x"], lu["rho"], lu["q"], lu["v"]] + ["1"] * len(names)
        rows = []
        for k, t in enumerate(p.t):
            for j, x in enumerate(p.x):
                rows.append([t, x, p.rho[k, j], p.q[k, j], p.v[k, j]] + list(p.xi[k, :, j]))
        writer.table("probe_" + name.replace(":", "_"), cols, units, rows)

    step_t = run.t[:-1]
    for (lid, face), flux in run.boundaries.items():
        cols = ["t"] + [f"flux_{c}" for c in names]
        writer.table(f"boundary_{lid}_{face}", cols, [lu["t"]] + [lu["q"]] * len(names),
                     [[t] + list(f) for t, f in zip(step_t, flux)])

    ends = [(l.id, run.exit_flux(l.id)) for l in scen.network.origins]
    ends += [(l.id, run.entry_flux(l.id)) for l in scen.network.destinations]
    for lid, flux in ends:
        curve = an.n_curve(flux, run.dt, boundary=lid)
        cols = ["t", "N"] + [f"N_{c}" for c in names]
        writer.table(f"ncurve_{lid}", cols, [lu["t"]] + [lu["N"]] * (len(names) + 1),
                     [[t, n.sum()] + list(n) for t, n in zip(curve.t, curve.counts)])

    final = []
    for lid, rho in run.final_rho.items():
        link = scen.network.link(lid)
        for j, r in enumerate(rho):
            final.append([lid, (j + 0.5) * link.dx, r])
    writer.table("final_density", ["link", "x", "rho"], ["", lu["x"], lu["rho"]], final)
    return {"cfl": cfl, "dt": scen.dt, "steps": scen.steps, "horizon": scen.horizon,
            "queues": run.queues}


def _simulate_mixed(doc: dict, writer: Writer, labels: dict) -> dict:
    m = doc["mixed"]
    params = mt.MixedParams(m["vf"], m["l1"], m["l2"], m["tau1"], m["tau2"])
    cells, steps, dt = sc.numerics_of(doc)
    length = float(m["length"])
    dx = length / cells
    cfl = mt.ring_cfl(params, dx, dt)
    if cfl > 1.0:
        raise nw.CflError(f"CFL number {cfl:.6g} exceeds 1")
    _, rho0 = mt.sinusoidal_ring(params, cells, length, m["base"], m["amplitude"])
    every = max(1, steps // 50)
    ring = mt.run_ring(rho0, params, dx, dt, steps, save_every=every)
    v = ring.speed
    rows = [[t, x, ring.rho[k, j, 0], ring.rho[k, j, 1], v[k, j]]
            for k, t in enumerate(ring.t) for j, x in enumerate(ring.x)]
    lu = labels
    writer.table("ring", ["t", "x", "rho_1", "rho_2", "v"],
                 [lu["t"], lu["x"], lu["rho"], lu["rho"], lu["v"]], rows)
    return {"cfl": cfl, "dt": dt, "steps": steps, "horizon": dt * steps}


def cmd_simulate(args) -> int:
    doc = _load_doc(args)
    writer = Writer(Path(args.out), args.format)
    labels = _unit_labels(doc)
    if doc.get("model") == "mixed-ring":
        info = _simulate_mixed(doc, writer, labels)
    else:
        info = _simulate_network(doc, writer, labels)
    manifest = {"schema_version": sc.SCHEMA_VERSION, "scenario": doc["id"],
                "hash": sc.manifest_hash(doc), "units": labels, "files": sorted(writer.files),
                **info}
    (writer.out / "scenario.json").write_text(sc.serialize(doc))
    (writer.out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"wrote {len(writer.files)} tables to {writer.out} (CFL {info['cfl']:.4f})")
    return 0


def _pair(text: str, n: int | tuple[int, int]) -> list[float]:
    lo, hi = (n, n) if isinstance(n, int) else n
    parts = [float(p) for p in text.split(",")]
    if not lo <= len(parts) <= hi:
        raise ValueError(f"expected {lo}-{hi} comma-separated numbers, got {text!r}")
    return parts


def cmd_riemann(args) -> int:
    if args.model == "mixed":
        m = {**json.loads(args.params)} if args.params else {}
        params = mt.MixedParams(**m)
        left, right = (mt.MixedState(*_pair(s, 2)) for s in (args.left, args.right))
        mid = mt.riemann_intermediate(left, right, params)
        face = mt.godunov_boundary_state(left, right, params)
        body = {"model": "mixed", "left": [left.rho1, left.rho2], "right": [right.rho1, right.rho2],
                "intermediate": [mid.rho1, mid.rho2], "boundary_state": [face.rho1, face.rho2],
                "eigen_left": list(mt.eigen(left, params)), "eigen_right": list(mt.eigen(right, params)),
                "eigen_intermediate": list(mt.eigen(mid, params)),
                "flux": list(mt.boundary_flux(left, right, params))}
    else:
        fd = fd_from_spec(json.loads(args.fd) if args.fd else DEFAULT_FD)
        if args.model == "link":
            # a state is "rho" or "a,rho"
            vals = [_pair(s, (1, 2)) for s in (args.left, args.right)]
            states = [rl.RoadState(v[0], v[1], fd) if len(v) == 2 else rl.RoadState(1.0, v[0], fd)
                      for v in vals]
            fan = rl.classify(*states)
            body = {"model": "link", "left": states[0].as_dict(), "right": states[1].as_dict(),
                    **fan.as_dict()}
        else:
            # left is "own,others[,a]", right is the downstream density on the same road
            own, k, *rest = _pair(args.left, (2, 3))
            left = jm.PartialState(own, k, fd, rest[0] if rest else 1.0)
            rho_r = _pair(args.right, 1)[0]
            sol = jm.classify_diverge_riemann(left, rho_r)
            body = {"model": "diverge",
                    "left": {"rho_own": own, "k": k, "a": left.a, "critical": left.critical,
                             "partial_capacity": left.capacity},
                    "right": {"rho": rho_r}, **sol.as_dict()}
    print(json.dumps(body, indent=2, sort_keys=True))
    return 0


def cmd_verify(args) -> int:
    verdicts = ex.verify(args.ids or ["all"])
    text = ex.report_json(verdicts)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "verdict.json").write_text(text)
    if args.format == "json":
        sys.stdout.write(text)
    else:
        for v in verdicts:
            print("\n".join(v.lines()))
        n_fail = sum(not v.passed for v in verdicts)
        print(f"{len(verdicts) - n_fail}/{len(verdicts)} scenarios passed")
    return 0 if all(v.passed for v in verdicts) else EXIT_FAIL


def _values(args) -> list[float]:
    if args.range:
        start, stop, step = (float(x) for x in args.range.split(":"))
        if step <= 0 or stop < start:
            return []
        n = int(math.floor((stop - start) / step + 1e-9)) + 1
        return [round(start + i * step, 12) for i in range(n)]
    if args.values is None or not args.values.strip():
        return []
    return [float(v) for v in args.values.split(",") if v.strip()]


def cmd_sweep(args) -> int:
    doc = sc.apply_overrides(sc.load(args.scenario), args.set or [])
    rows = ex.sweep(doc, args.param, _values(args), jobs=args.jobs)
    columns = [args.param] + sorted({k for r in rows for k in r} - {args.param},
                                    key=lambda k: (not k.startswith("ATT"), k))
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow(["" if r.get(c) is None else _num(r[c]) for c in columns])
    finally:
        if args.out:
            fh.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kinwave", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write CSV tables plus a manifest")
    p.add_argument("scenario", help="built-in id such as ch3-merge or a path to a .json file")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", action="append", metavar="PATH=VALUE", help="override a field")
    p.add_argument("--probe", action="append", metavar="LINK[:CELL]", help="record a link or cell")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("riemann", help="solve one Riemann problem and print the wave fan")
    p.add_argument("model", choices=["link", "diverge", "mixed"])
    p.add_argument("--left", required=True, help="link: [a,]rho  diverge: own,others[,a]  mixed: rho1,rho2")
    p.add_argument("--right", required=True, help="link: [a,]rho  diverge: rho  mixed: rho1,rho2")
    p.add_argument("--fd", help="diagram block as JSON (link and diverge models)")
    p.add_argument("--params", help="mixed-traffic parameters as JSON")
    p.set_defaults(func=cmd_riemann)

    p = sub.add_parser("verify", help="run built-in experiments against the expected values")
    p.add_argument("ids", nargs="*", help="scenario ids or 'all' (default)")
    p.add_argument("--out", help="directory for verdict.json")
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="equilibrium metrics over a range of one parameter")
    p.add_argument("scenario")
    p.add_argument("--param", default="xi", help="dotted path or the 'xi' alias")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--values", help="comma-separated values")
    g.add_argument("--range", metavar="START:STOP:STEP", help="inclusive range")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--set", action="append", metavar="PATH=VALUE")
    p.add_argument("--out", help="CSV file (default: standard output)")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except nw.CflError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CFL
    except nw.ConsistencyError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONSISTENCY
    except (OSError, ValueError, KeyError) as exc:
        # SchemaError and the model input errors are ValueError subclasses
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA

if __name__ == "__main__":
    sys.exit(main())
