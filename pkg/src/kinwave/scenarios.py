"""Scenario documents: JSON schema, canonical serialization, overrides and
construction of engine objects; plus the built-in experiment library."""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources
from typing import Any

import jsonschema

from . import junction_models as jm
from .fundamental_diagram import FdCurve, UnitSystem, fd_from_spec
from .network import (Commodity, ControlSpec, DestinationSpec, IncidentSpec, InitialSpec,
                      Junction, JunctionType, Link, LinkKind, Network, OriginSpec,
                      ProbeSpec, Profile, Scenario)

SCHEMA_VERSION = 1


class SchemaError(ValueError):
    """A scenario document that does not match the schema."""


_profile = {"type": "array", "minItems": 1,
            "items": {"type": "array", "minItems": 2, "maxItems": 2,
                      "items": {"type": "number"}}}

SCHEMA: dict = {
    "type": "object",
    "required": ["schema_version", "id"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "id": {"type": "string"},
        "description": {"type": "string"},
        "model": {"enum": ["network", "mixed-ring"]},
        "parameters": {"type": "object"},
        "units": {"type": "object",
                  "properties": {"l_km": {"type": "number", "exclusiveMinimum": 0},
                                 "tau_s": {"type": "number", "exclusiveMinimum": 0},
                                 "system": {"enum": ["miles_hours"]}},
                  "additionalProperties": False},
        "fds": {"type": "object", "additionalProperties": {
            "type": "object", "required": ["type"],
            "properties": {"type": {"enum": ["triangular", "greenshields",
                                             "kerner_konhauser", "exponential"]}}}},
        "links": {"type": "array", "items": {
            "type": "object", "required": ["id"],
            "properties": {
                "id": {"type": "string"},
                "kind": {"enum": ["road", "origin", "destination"]},
                "length": {"type": "number", "exclusiveMinimum": 0},
                "lanes": {"type": "number", "exclusiveMinimum": 0},
                "cells": {"type": "integer", "minimum": 1},
                "cell_factor": {"type": "integer", "minimum": 1},
                "fd": {"type": "string"}},
            "additionalProperties": False}},
        "junctions": {"type": "array", "items": {
            "type": "object", "required": ["type", "upstream", "downstream"],
            "properties": {
                "type": {"enum": [t.value for t in JunctionType]},
                "upstream": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "downstream": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "scheme": {"type": "object", "required": ["type"],
                           "properties": {"type": {"enum": ["fairness", "priority", "lanes"]}}},
                "turning": {"type": "array", "items": {"type": "array",
                                                       "items": {"type": "number", "minimum": 0}}}},
            "additionalProperties": False}},
        "commodities": {"type": "array", "items": {
            "type": "object", "required": ["id", "path"],
            "properties": {"id": {"type": "string"},
                           "path": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                           "cyclic": {"type": "boolean"}},
            "additionalProperties": False}},
        "boundary_conditions": {"type": "object", "properties": {
            "origins": {"type": "array", "items": {
                "type": "object", "required": ["link"],
                "properties": {"link": {"type": "string"},
                               "mode": {"enum": ["profile", "neumann"]},
                               "demand": _profile, "demand_vph": _profile,
                               "split": {"type": "array", "items": {"type": "number", "minimum": 0}}},
                "additionalProperties": False}},
            "destinations": {"type": "array", "items": {
                "type": "object", "required": ["link"],
                "properties": {"link": {"type": "string"},
                               "mode": {"enum": ["profile", "neumann", "free"]},
                               "supply": _profile, "supply_vph": _profile},
                "additionalProperties": False}},
            "signals": {"type": "array", "items": {
                "type": "object", "required": ["link", "green"],
                "properties": {"link": {"type": "string"}, "green": _profile},
                "additionalProperties": False}},
            "meters": {"type": "array", "items": {
                "type": "object", "required": ["link"],
                "properties": {"link": {"type": "string"}, "rate": _profile, "rate_vph": _profile},
                "additionalProperties": False}},
            "incidents": {"type": "array", "items": {
                "type": "object", "required": ["link", "cells", "window"],
                "properties": {"link": {"type": "string"},
                               "cells": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                         "minItems": 2, "maxItems": 2},
                               "window": {"type": "array", "items": {"type": "number"},
                                          "minItems": 2, "maxItems": 2},
                               "lanes": {"type": "number", "exclusiveMinimum": 0},
                               "speed_factor": {"type": "number", "exclusiveMinimum": 0}},
                "additionalProperties": False}}},
            "additionalProperties": False},
        "initial": {"type": "array", "items": {
            "type": "object", "required": ["link"],
            "properties": {"link": {"type": "string"},
                           "density": {}, "density_rel": {}, "density_vpkm": {}, "density_vpm": {},
                           "xi": {"type": "array", "items": {"type": "number", "minimum": 0}}},
            "additionalProperties": False}},
        "numerics": {"type": "object", "properties": {
            "horizon": {"type": "number", "exclusiveMinimum": 0},
            "cells": {"type": "integer", "minimum": 1},
            "steps": {"type": "integer", "minimum": 0},
            "steps_per_cell": {"type": "number", "exclusiveMinimum": 0},
            "dt": {"type": "number", "exclusiveMinimum": 0}},
            "additionalProperties": False},
        "probes": {"type": "array", "items": {
            "type": "object", "required": ["link"],
            "properties": {"link": {"type": "string"},
                           "cell": {"type": "integer"},
                           "every": {"type": "integer", "minimum": 1}},
            "additionalProperties": False}},
        "boundaries": {"type": "array", "items": {
            "type": "object", "required": ["link", "face"],
            "properties": {"link": {"type": "string"}, "face": {"type": "integer", "minimum": 0}},
            "additionalProperties": False}},
        "mixed": {"type": "object"},
    },
    "additionalProperties": False,
}


# -------------------------------------------------------------- documents

def serialize(doc: dict) -> str:
    """Canonical text: sorted keys, two-space indent, shortest float repr."""
    return json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False, allow_nan=False) + "\n"


def _schema_messages(doc: Any) -> list[str]:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    out = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path)):
        path = "/".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{path}: {err.message}")
    return out


def parse(text: str) -> dict:
    """Decode and schema-check a scenario document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    problems = _schema_messages(doc)
    if problems:
        raise SchemaError("; ".join(problems))
    return doc


def manifest_hash(doc: dict) -> str:
    """SHA-256 of the canonical text with the free-text description removed."""
    semantic = {k: v for k, v in doc.items() if k != "description"}
    return hashlib.sha256(serialize(semantic).encode()).hexdigest()


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def set_path(doc: dict, path: str, value) -> dict:
    """Return a copy of ``doc`` with the dotted ``path`` set to ``value``.

    ``xi`` is an alias for the first origin's two-commodity split.
    """
    out = copy.deepcopy(doc)
    if path == "xi":
        xi = float(value)
        out.setdefault("parameters", {})["xi"] = xi
        out["boundary_conditions"]["origins"][0]["split"] = [xi, 1.0 - xi]
        return out
    keys = path.split(".")
    node = out
    try:
        for key in keys[:-1]:
            node = node[int(key)] if isinstance(node, list) else node.setdefault(key, {})
        last = keys[-1]
        if isinstance(node, list):
            node[int(last)] = value
        else:
            node[last] = value
    except (IndexError, ValueError, TypeError, AttributeError, KeyError):
        raise SchemaError(f"{path}: no such field") from None
    return out


def apply_overrides(doc: dict, overrides: list[str]) -> dict:
    for item in overrides:
        if "=" not in item:
            raise SchemaError(f"override {item!r} must look like PATH=VALUE")
        path, raw = item.split("=", 1)
        doc = set_path(doc, path.strip(), _parse_value(raw.strip()))
    problems = _schema_messages(doc)
    if problems:
        raise SchemaError("; ".join(problems))
    return doc


# ---------------------------------------------------------------- library

_ID_RE = re.compile(r"^([a-z0-9\-]+?)(?:\(([^)]*)\))?$")


def builtin_ids() -> list[str]:
    return sorted(json.loads(_data("index.json"))["scenarios"])


def _data(name: str) -> str:
    return resources.files("kinwave").joinpath("data", name).read_text()


def load_builtin(scenario_id: str) -> dict:
    """Document for a built-in id such as ``ch7-equilibrium(0.6)``."""
    m = _ID_RE.match(scenario_id.strip())
    if not m:
        raise SchemaError(f"malformed scenario id {scenario_id!r}")
    base, arg = m.group(1), m.group(2)
    index = json.loads(_data("index.json"))["scenarios"]
    if base not in index:
        raise SchemaError(f"unknown scenario id {base!r}")
    doc = parse(_data(index[base]))
    if arg is not None and arg != "":
        param = doc.get("parameters", {}).get("name", "xi")
        doc = set_path(doc, param, float(arg))
        doc["id"] = f"{base}({float(arg):g})"
    return doc


def load(source: str) -> dict:
    """A built-in id or a path to a JSON file."""
    if source.endswith(".json"):
        with open(source, encoding="utf-8") as fh:
            return parse(fh.read())
    return load_builtin(source)


def expected_values() -> dict:
    return json.loads(_data("expected.json"))


# ----------------------------------------------------------- construction

@dataclass
class Built:
    """Engine objects plus the bookkeeping needed for reporting."""

    doc: dict
    scenario: Scenario
    units: UnitSystem
    fds: dict[str, FdCurve]
    boundaries: list[tuple[str, int]]


def units_of(doc: dict) -> UnitSystem:
    u = doc.get("units", {})
    if u.get("system") == "miles_hours":
        return UnitSystem.miles_hours()
    return UnitSystem(u.get("l_km", 1.0), u.get("tau_s", 1.0))


def _profile_of(block: dict, key: str, units: UnitSystem, default=None) -> Profile:
    if key in block:
        pairs = block[key]
    elif key + "_vph" in block:
        pairs = [[t, units.flow_from_vph(v)] for t, v in block[key + "_vph"]]
    elif default is not None:
        pairs = [[0.0, default]]
    else:
        raise SchemaError(f"missing {key} profile")
    if any(v < 0 for _, v in pairs):
        raise SchemaError(f"{key} profile values must be non-negative")
    return Profile(tuple((float(t), float(v)) for t, v in pairs))


def _density_spec(block: dict, fd: FdCurve, units: UnitSystem):
    for key, scale in (("density", 1.0), ("density_rel", fd.rho_j),
                       ("density_vpkm", units.density_from_vpkm(1.0)),
                       ("density_vpm", units.density_from_vpm(1.0))):
        if key in block:
            spec = block[key]
            if isinstance(spec, (int, float)):
                return float(spec) * scale
            spec = dict(spec)
            for f in ("mean", "amplitude", "value"):
                if f in spec:
                    spec[f] = float(spec[f]) * scale
            if "values" in spec:
                spec["values"] = [float(v) * scale for v in spec["values"]]
            return spec
    return 0.0


def _scheme(block: dict | None) -> jm.MergeScheme:
    if not block or block["type"] == "fairness":
        return jm.Fairness()
    if block["type"] == "priority":
        return jm.DaganzoPriority(tuple(block["priorities"]))
    return jm.LebacqueLanes(tuple(block["upstream_lanes"]), float(block["downstream_lanes"]),
                            bool(block.get("strict", False)))


def numerics_of(doc: dict) -> tuple[int, int, float]:
    """(base cell count, steps, dt)."""
    num = doc.get("numerics", {})
    cells = int(num.get("cells", 1))
    horizon = float(num["horizon"])
    if "steps" in num:
        steps = int(num["steps"])
    elif "steps_per_cell" in num:
        steps = int(round(num["steps_per_cell"] * cells))
    elif "dt" in num:
        steps = int(round(horizon / num["dt"]))
    else:
        raise SchemaError("numerics needs steps, steps_per_cell or dt")
    dt = horizon / steps if steps else float(num.get("dt", horizon))
    return cells, steps, dt


def build(doc: dict) -> Built:
    """Turn a checked network document into a :class:`Scenario`."""
    if doc.get("model", "network") != "network":
        raise SchemaError("only network documents build a network scenario")
    units = units_of(doc)
    fds = {name: fd_from_spec(spec, units) for name, spec in doc.get("fds", {}).items()}
    base_cells, steps, dt = numerics_of(doc)

    links = []
    for lb in doc["links"]:
        kind = LinkKind(lb.get("kind", "road"))
        if kind == LinkKind.ROAD:
            if lb.get("fd") not in fds:
                raise SchemaError(f"links/{lb['id']}: unknown fd {lb.get('fd')!r}")
            cells = int(lb["cells"]) if "cells" in lb else base_cells * int(lb.get("cell_factor", 1))
            links.append(Link(lb["id"], kind, float(lb["length"]), float(lb.get("lanes", 1)),
                              cells, fds[lb["fd"]], lb["fd"]))
        else:
            links.append(Link(lb["id"], kind))
    junctions = [Junction(JunctionType(jb["type"]), list(jb["upstream"]), list(jb["downstream"]),
                          _scheme(jb.get("scheme")), jb.get("turning"))
                 for jb in doc.get("junctions", [])]
    commodities = [Commodity(cb["id"], list(cb["path"]), bool(cb.get("cyclic", False)))
                   for cb in doc.get("commodities", [])]
    net = Network(links, junctions, commodities)

    bc = doc.get("boundary_conditions", {})
    origins = []
    for ob in bc.get("origins", []):
        mode = ob.get("mode", "profile")
        total = _profile_of(ob, "demand", units, 0.0 if mode == "neumann" else None)
        origins.append(OriginSpec(ob["link"], mode, total, ob.get("split")))
    dests = []
    for db in bc.get("destinations", []):
        mode = db.get("mode", "profile")
        supply = _profile_of(db, "supply", units, 0.0 if mode != "profile" else None)
        dests.append(DestinationSpec(db["link"], mode, supply))
    controls = [ControlSpec(sb["link"], "signal", _profile_of(sb, "green", units))
                for sb in bc.get("signals", [])]
    controls += [ControlSpec(mb["link"], "meter", _profile_of(mb, "rate", units))
                 for mb in bc.get("meters", [])]
    horizon = dt * steps
    incidents = []
    for ib in bc.get("incidents", []):
        t0, t1 = ib["window"]
        if not (0 <= t0 < t1 <= horizon * (1 + 1e-12)):
            raise SchemaError(f"incident on {ib['link']}: window must lie within the horizon")
        incidents.append(IncidentSpec(ib["link"], ib["cells"][0], ib["cells"][1], t0, t1,
                                      ib.get("lanes"), ib.get("speed_factor")))

    initial = []
    for ib in doc.get("initial", []):
        link = net.link(ib["link"])
        initial.append(InitialSpec(ib["link"], _density_spec(ib, link.fd, units), ib.get("xi")))
    probes = [ProbeSpec(pb["link"], pb.get("cell"), pb.get("every", 1)) for pb in doc.get("probes", [])]
    boundaries = [(b["link"], b["face"]) for b in doc.get("boundaries", [])]
    sc = Scenario(net, dt, steps, origins, dests, controls, incidents, initial, probes)
    return Built(doc, sc, units, fds, boundaries)
