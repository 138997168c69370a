"""Small scenario documents shared by the tests."""

from __future__ import annotations

import copy

from kinwave import scenarios as sc


def corridor(cells=20, steps=40, demand=None, density=0.0, split=(1.0, 0.0), supply_mode="free",
             horizon=None, xi=None):
    """Origin, one unit-length road (triangular, vf 1, rho_c 0.2, rho_j 1), destination."""
    horizon = horizon if horizon is not None else 0.8 * steps / cells
    doc = {
        "schema_version": 1, "id": "corridor",
        "fds": {"tri": {"type": "triangular", "vf": 1.0, "rho_c": 0.2, "rho_j": 1.0}},
        "links": [{"id": "O", "kind": "origin"},
                  {"id": "r", "length": 1.0, "lanes": 1, "cells": cells, "fd": "tri"},
                  {"id": "D", "kind": "destination"}],
        "junctions": [{"type": "linear", "upstream": ["O"], "downstream": ["r"]},
                      {"type": "linear", "upstream": ["r"], "downstream": ["D"]}],
        "commodities": [{"id": "a", "path": ["O", "r", "D"]}, {"id": "b", "path": ["O", "r", "D"]}],
        "boundary_conditions": {
            "origins": [{"link": "O", "demand": demand or [[0, 0.0]], "split": list(split)}],
            "destinations": [{"link": "D", "mode": supply_mode}]},
        "initial": [{"link": "r", "density": density, **({"xi": list(xi)} if xi else {})}],
        "numerics": {"horizon": horizon, "steps": steps},
    }
    return sc.apply_overrides(doc, [])


def diamond(cells=10, steps=40, demand=0.5, split=(0.6, 0.4), init=None):
    """Origin, road, proportional diverge into two roads, merge, road, destination."""
    init = init or {}
    links = [{"id": "O", "kind": "origin"}, {"id": "D", "kind": "destination"}]
    for lid, lanes in (("a", 2), ("b", 1), ("c", 1), ("e", 2)):
        links.append({"id": lid, "length": 1.0, "lanes": lanes, "cells": cells, "fd": "tri"})
    doc = {
        "schema_version": 1, "id": "diamond",
        "fds": {"tri": {"type": "triangular", "vf": 1.0, "rho_c": 0.2, "rho_j": 1.0}},
        "links": links,
        "junctions": [{"type": "linear", "upstream": ["O"], "downstream": ["a"]},
                      {"type": "diverge-proportional", "upstream": ["a"], "downstream": ["b", "c"]},
                      {"type": "merge", "upstream": ["b", "c"], "downstream": ["e"]},
                      {"type": "linear", "upstream": ["e"], "downstream": ["D"]}],
        "commodities": [{"id": "p", "path": ["O", "a", "b", "e", "D"]},
                        {"id": "q", "path": ["O", "a", "c", "e", "D"]}],
        "boundary_conditions": {
            "origins": [{"link": "O", "demand": [[0, demand]], "split": list(split)}],
            "destinations": [{"link": "D", "supply": [[0, 0.2]]}]},
        "initial": [{"link": k, "density": v} for k, v in init.items()],
        "numerics": {"horizon": 0.8 * steps / cells, "steps": steps},
    }
    return sc.apply_overrides(copy.deepcopy(doc), [])
