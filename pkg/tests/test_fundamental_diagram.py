import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from kinwave import fundamental_diagram as fdm
from kinwave.fundamental_diagram import (Exponential, Greenshields, KernerKonhauser, Triangular,
                                         UnitSystem, fd_from_spec)

from oracles import exponential_speed, golden_max, kk_speed

FREEWAY = Triangular(rho_j=180.0, vf=65.0, rho_c=36.0)
EXPO = Exponential(rho_j=180.0, vf=5.0, cj=-1.0)
KK = KernerKonhauser(rho_j=1.0)
GREEN = Greenshields(rho_j=1.0, vf=2.0)
FAMILIES = [FREEWAY, EXPO, KK, GREEN]

# frozen from a 30-digit mpmath root of dQ/du = 0
EXPO_ALPHA_FROZEN = 46.6170384501302214615
KK_ALPHA_FROZEN = 0.199413539736368607133


def test_free_speed_below_critical():
    assert FREEWAY.speed(1, 20.0) == pytest.approx(65.0)


def test_zero_speed_at_jam():
    assert FREEWAY.speed(1, 180.0) == 0.0


def test_lane_capacity_is_2340_vph():
    assert FREEWAY.flow(1, 36.0) == pytest.approx(2340.0)


@pytest.mark.parametrize("fd", FAMILIES)
def test_empty_road_carries_no_flow(fd):
    assert fd.flow(1, 0.0) == 0.0


def test_congested_branch_value():
    assert FREEWAY.flow(1, 90.0) == pytest.approx(1462.5, rel=1e-12)


def test_three_lane_critical_and_capacity():
    assert FREEWAY.critical_density(3) == pytest.approx(108.0)
    assert FREEWAY.capacity(3) == pytest.approx(7020.0)


def test_exponential_critical_density_matches_published_ratio():
    assert EXPO.critical_density(1) / 180.0 == pytest.approx(0.259, abs=5e-4)


def test_exponential_critical_density_frozen_oracle():
    assert EXPO.critical_density(1) == pytest.approx(EXPO_ALPHA_FROZEN, rel=1e-9)


def test_exponential_critical_density_golden_section_route():
    alpha = golden_max(lambda u: u * exponential_speed(u), 1e-6, 180.0)
    assert EXPO.critical_density(1) == pytest.approx(alpha, rel=1e-7)
    # flow at alpha is the maximum
    grid = np.linspace(1e-3, 180.0, 20001)
    assert EXPO.flow(1, alpha) >= EXPO.flow(1, grid).max() - 1e-9


def test_kk_critical_density_frozen_oracle():
    assert KK.critical_density(1) == pytest.approx(KK_ALPHA_FROZEN, rel=1e-9)


def test_kk_critical_density_golden_section_route():
    alpha = golden_max(lambda u: u * kk_speed(u), 1e-6, 1.0)
    assert KK.critical_density(1) == pytest.approx(alpha, rel=1e-7)
    h = 1e-6
    slope = (KK.flow(1, alpha + h) - KK.flow(1, alpha - h)) / (2 * h)
    assert abs(slope) * h < 1e-6 * KK.capacity(1)


def test_jam_demand_and_supply():
    assert FREEWAY.demand(1, 180.0) == pytest.approx(2340.0)
    assert FREEWAY.supply(1, 180.0) == 0.0


def test_empty_demand_and_supply():
    assert FREEWAY.demand(1, 0.0) == 0.0
    assert FREEWAY.supply(1, 0.0) == pytest.approx(2340.0)


def test_merge_mainline_state_demand_is_its_flow():
    units = UnitSystem(0.028, 5.0)
    fd = fd_from_spec({"type": "triangular", "vf_mph": 65, "rho_j_vpkm": 180, "rho_c_vpkm": 36}, units)
    rho = 0.36 * fd.rho_j  # total density over both lanes
    assert rho / 2 < fd.critical_density(1)
    assert fd.demand(2, rho) == pytest.approx(fd.flow(2, rho), rel=1e-12)


def test_speed_unit_conversion():
    units = UnitSystem(0.028, 5.0)
    assert units.speed_from_mph(65.0) == pytest.approx(5.1877, rel=1e-3)
    assert units.speed_to_mph(units.speed_from_mph(65.0)) == pytest.approx(65.0, rel=1e-14)


def test_critical_state_demand_equals_supply():
    for fd in FAMILIES:
        a = fd.critical_density(1)
        assert fd.demand(1, a) == pytest.approx(fd.capacity(1), rel=1e-12)
        assert fd.supply(1, a) == pytest.approx(fd.capacity(1), rel=1e-12)


def test_kk_speed_is_never_negative():
    assert KK.speed(1, 1.0) >= 0.0
    assert np.all(KK.speed(1, np.linspace(0, 1, 101)) >= 0.0)


def test_invalid_density_rejected():
    with pytest.raises(fdm.DomainError):
        FREEWAY.flow(1, 181.0)
    with pytest.raises(fdm.DomainError):
        FREEWAY.flow(1, -1.0)


def test_spec_round_trip():
    for fd in FAMILIES:
        assert fd_from_spec(fd.to_spec()) == fd


@pytest.mark.parametrize("fd", FAMILIES)
def test_min_of_demand_and_supply_is_flow_on_grid(fd):
    rho = np.linspace(0, fd.rho_j, 1001)
    both = np.minimum(fd.demand(1, rho), fd.supply(1, rho))
    np.testing.assert_allclose(both, fd.flow(1, rho), rtol=0, atol=1e-12 * fd.capacity(1))


@pytest.mark.parametrize("fd", FAMILIES)
def test_demand_and_supply_monotone(fd):
    rho = np.linspace(0, fd.rho_j, 1000)
    assert np.all(np.diff(fd.demand(1, rho)) >= -1e-12)
    assert np.all(np.diff(fd.supply(1, rho)) <= 1e-12)


@given(lanes=st.floats(0.5, 6.0), frac=st.floats(0.0, 1.0), which=st.integers(0, 3))
def test_flow_scales_with_lanes(lanes, frac, which):
    fd = FAMILIES[which]
    rho = frac * fd.rho_j
    assert fd.flow(lanes, lanes * rho) == pytest.approx(lanes * fd.flow(1, rho), rel=1e-12, abs=1e-12)
    assert fd.capacity(lanes) == pytest.approx(lanes * fd.capacity(1), rel=1e-12)


@given(frac=st.floats(0.0, 1.0), which=st.integers(0, 3))
def test_demand_supply_identity_property(frac, which):
    fd = FAMILIES[which]
    rho = frac * fd.rho_j
    assert min(fd.demand(1, rho), fd.supply(1, rho)) == pytest.approx(fd.flow(1, rho), abs=1e-12)


def test_functional_aliases_agree_with_methods():
    assert fdm.flow(FREEWAY, 2, 50.0) == FREEWAY.flow(2, 50.0)
    assert fdm.capacity(FREEWAY, 2) == FREEWAY.capacity(2)
    assert math.isclose(fdm.speed(EXPO, 1, 30.0), EXPO.speed(1, 30.0))
