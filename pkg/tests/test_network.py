import copy

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kinwave import network as nw
from kinwave import scenarios as sc

from helpers import corridor, diamond

QC = 65 * 36  # ch6 freeway lane capacity, veh/h


def _network(doc):
    return sc.build(doc).scenario.network


def test_builtin_networks_are_valid():
    for sid in ("ch6-network", "ch3-merge", "ch4-diverge-general", "ch2-ring-bottleneck"):
        assert nw.validate(sc.build(sc.load_builtin(sid)).scenario.network) == []


def test_skipped_adjacency_is_reported():
    doc = sc.load_builtin("ch6-network")
    doc["commodities"][0]["path"] = ["0", "2", "5", "1"]
    with pytest.raises(ValueError, match="disconnected path 2->5"):
        nw.run(sc.build(doc).scenario)


def test_junction_conflict_is_reported():
    doc = corridor()
    doc["links"].append({"id": "D2", "kind": "destination"})
    doc["junctions"].append({"type": "diverge-proportional", "upstream": ["r"], "downstream": ["D", "D2"]})
    with pytest.raises(ValueError, match="link r: downstream end joined by two junctions"):
        nw.run(sc.build(doc).scenario)


def test_cfl_numbers():
    assert nw.cfl_number(sc.build(sc.load_builtin("ch6-network")).scenario) == pytest.approx(0.91)
    assert nw.cfl_number(sc.build(sc.load_builtin("ch3-merge")).scenario) <= 0.65
    s = sc.build(corridor(cells=20, steps=40)).scenario
    assert nw.cfl_number(s) == pytest.approx(0.8)
    s.dt *= 1e-6
    assert nw.cfl_number(s) == pytest.approx(0.8e-6)


def test_cfl_violation_raises():
    with pytest.raises(nw.CflError):
        nw.run(sc.build(corridor(cells=20, steps=10, horizon=1.0)).scenario)


def test_uniform_free_flow_stays_steady():
    run = nw.run(sc.build(corridor(density=0.1, demand=[[0, 0.1]], steps=200)).scenario)
    np.testing.assert_allclose(run.final_rho["r"], 0.1, rtol=0, atol=1e-14)
    np.testing.assert_allclose(run.exit_flux("r").sum(axis=1), 0.1, atol=1e-14)


def test_first_arrival_at_diverge_splits_by_supply():
    doc = sc.apply_overrides(sc.load_builtin("ch6-network"),
                             ["numerics.cells=50", "numerics.horizon=0.42"])
    run = nw.run(sc.build(doc).scenario)
    assert run.exit_flux("2")[-1].sum() == pytest.approx(20 / 7 * QC, rel=1e-9)
    assert run.entry_flux("3")[-1].sum() == pytest.approx(2 * QC, rel=1e-9)
    assert run.entry_flux("4")[-1].sum() == pytest.approx(6 / 7 * QC, rel=1e-9)


def _vehicle_balance(run):
    """Change in link content minus accumulated entry/exit flux, per link and commodity."""
    inflow = np.cumsum(run.link_flux[:, :, 0, :], axis=0) * run.dt
    outflow = np.cumsum(run.link_flux[:, :, 1, :], axis=0) * run.dt
    return run.link_counts[1:] - run.link_counts[0] - (inflow - outflow)


def test_per_commodity_conservation_telescopes():
    run = nw.run(sc.build(diamond(steps=120, init={"a": 0.6, "e": 0.3})).scenario)
    roads = [i for i, l in enumerate(run.scenario.network.links) if l.kind == nw.LinkKind.ROAD]
    assert np.max(np.abs(_vehicle_balance(run)[:, roads, :])) < 1e-12


def test_junction_fluxes_balance():
    run = nw.run(sc.build(diamond(steps=120)).scenario)
    np.testing.assert_allclose(run.exit_flux("a"), run.entry_flux("b") + run.entry_flux("c"), atol=1e-14)
    np.testing.assert_allclose(run.exit_flux("b") + run.exit_flux("c"), run.entry_flux("e"), atol=1e-14)


def test_zero_demand_keeps_network_empty():
    run = nw.run(sc.build(diamond(demand=0.0, steps=60)).scenario)
    assert not np.any(run.link_flux)
    assert not np.any(run.link_counts)
    assert all(not np.any(v) for v in run.final_rho.values())


def test_fifo_interface_travels_at_free_speed():
    # commodity a fills the road; from t=0 the origin sends only commodity b
    doc = corridor(cells=40, steps=30, density=0.1, xi=(1.0, 0.0), demand=[[0, 0.1]], split=(0.0, 1.0))
    run = nw.run(sc.build(doc).scenario, probes=[nw.ProbeSpec("r")])
    pr = run.probes["r"]
    xi_b = pr.xi[-1, 1]
    # the interface sits at vf * t; numerical diffusion spreads it over a few cells
    front = pr.x[np.argmin(np.abs(xi_b - 0.5))]
    assert front == pytest.approx(run.t[-1], abs=2 / 40)
    assert np.all((pr.xi >= -1e-12) & (pr.xi <= 1 + 1e-12))
    np.testing.assert_allclose(pr.xi.sum(axis=1), 1.0, atol=1e-12)


@settings(max_examples=25, deadline=None)
@given(demand=st.floats(0, 1.5), sup=st.floats(0, 0.3),
       ra=st.floats(0, 1), rb=st.floats(0, 1), re=st.floats(0, 1), share=st.floats(0, 1))
def test_density_stays_within_jam_bounds(demand, sup, ra, rb, re, share):
    doc = diamond(steps=40, demand=demand, split=(share, 1 - share),
                  init={"a": 2 * ra, "b": rb, "e": 2 * re})
    doc["boundary_conditions"]["destinations"][0]["supply"] = [[0, sup]]
    run = nw.run(sc.build(doc).scenario)
    for lid, lanes in (("a", 2), ("b", 1), ("c", 1), ("e", 2)):
        rho = run.final_rho[lid]
        assert np.all(rho >= -1e-12)
        assert np.all(rho <= lanes * 1.0 + 1e-12)
    assert np.all(run.link_flux >= -1e-12)


def test_runs_are_bit_identical():
    doc = sc.apply_overrides(sc.load_builtin("ch6-network"), ["numerics.cells=25"])
    a = nw.run(sc.build(copy.deepcopy(doc)).scenario)
    b = nw.run(sc.build(copy.deepcopy(doc)).scenario)
    assert np.array_equal(a.link_flux, b.link_flux)
    assert all(np.array_equal(a.final_rho[k], b.final_rho[k]) for k in a.final_rho)
