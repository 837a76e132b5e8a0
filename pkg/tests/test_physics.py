"""Closure laws: harmonic density, double well, and their secant averages.

Expected values below are frozen from hand derivations:
  * 1/rho(1/2) = (1/2)(1/1) + (1/2)(1/10) = 0.55, so rho = 20/11.
  * drho/dc = -alpha*rho^2 with alpha = (rho2-rho1)/(rho1*rho2); at c=0,
    ratio (1,10): -0.9 * 100 = -90.
  * F(1/2) = (1/4)(1/4)/4 = 1/64.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsch2d.physics import (
    DensityFloorError,
    PhysParams,
    density,
    double_well,
    double_well_prime,
    drho_dc,
    g_secant,
    r_secant,
)

RATIOS = [(1.0, 1.0), (1.0, 10.0), (1.0, 50.0)]


def rel_gap(lhs, rhs, *scales):
    denom = max(abs(lhs), abs(rhs), *[abs(s) for s in scales], 1e-300)
    return abs(lhs - rhs) / denom


def test_alpha_values():
    assert PhysParams(rho1=1.0, rho2=1.0).alpha == 0.0
    assert PhysParams(rho1=1.0, rho2=10.0).alpha == pytest.approx(0.9, rel=1e-15)
    assert PhysParams(rho1=1.0, rho2=50.0).alpha == pytest.approx(0.98, rel=1e-15)


def test_density_endpoint_and_midpoint_values():
    p = PhysParams(rho1=1.0, rho2=10.0)
    assert density(1.0, p) == pytest.approx(1.0, rel=1e-15)
    assert density(0.0, p) == pytest.approx(10.0, rel=1e-15)
    assert density(0.5, p) == pytest.approx(20.0 / 11.0, rel=1e-14)


def test_drho_dc_frozen_value():
    p = PhysParams(rho1=1.0, rho2=10.0)
    assert drho_dc(0.0, p) == pytest.approx(-90.0, rel=1e-13)
    assert drho_dc(1.0, p) == pytest.approx(-0.9, rel=1e-13)


def test_drho_matches_finite_difference():
    p = PhysParams(rho1=1.0, rho2=10.0)
    h = 1e-6
    for c in np.linspace(0.0, 1.0, 11):
        fd = (density(c + h, p) - density(c - h, p)) / (2 * h)
        assert drho_dc(c, p) == pytest.approx(fd, rel=5e-9)


def test_double_well_frozen_values():
    assert double_well(0.5) == pytest.approx(1.0 / 64.0, rel=1e-15)
    assert double_well(0.0) == 0.0
    assert double_well(1.0) == 0.0
    for root in (0.0, 0.5, 1.0):
        assert double_well_prime(root) == 0.0


def test_matched_density_is_constant():
    p = PhysParams(rho1=1.0, rho2=1.0)
    c = np.linspace(-0.2, 1.2, 23)
    assert np.all(density(c, p) == 1.0)
    assert np.all(drho_dc(c, p) == 0.0)
    assert np.all(r_secant(c, c[::-1], p) == 0.0)


def test_density_floor_raises():
    p = PhysParams(rho1=1.0, rho2=50.0)
    # denominator (rho2-rho1)c + rho1 vanishes at c = -1/49
    with pytest.raises(DensityFloorError):
        density(-1.0 / 49.0, p)
    with pytest.raises(DensityFloorError):
        density(np.array([0.3, -1.0 / 49.0 + 1e-16]), p)


def test_vectorized_shapes():
    p = PhysParams(rho1=1.0, rho2=10.0)
    c = np.linspace(0, 1, 7).reshape(7, 1)
    assert density(c, p).shape == (7, 1)
    assert g_secant(c, c, p).shape == (7, 1)
    assert r_secant(c, c, p).shape == (7, 1)


@given(
    c=st.floats(min_value=-0.2, max_value=1.2),
    ratio=st.sampled_from(RATIOS),
)
def test_drho_is_minus_alpha_rho_squared(c, ratio):
    p = PhysParams(rho1=ratio[0], rho2=ratio[1])
    lhs = drho_dc(c, p)
    rhs = -p.alpha * density(c, p) ** 2
    assert rel_gap(lhs, rhs) < 1e-13


@given(
    c0=st.floats(min_value=0.0, max_value=1.0),
    c1=st.floats(min_value=0.0, max_value=1.0),
    ratio=st.sampled_from(RATIOS),
)
@settings(max_examples=300)
def test_secant_identities(c0, c1, ratio):
    p = PhysParams(rho1=ratio[0], rho2=ratio[1])
    dc = c1 - c0
    F1, F0 = double_well(c1), double_well(c0)
    g = g_secant(c1, c0, p)
    # the closed form cancels O(1) intermediate terms, so when both
    # endpoints sit at well bottoms (F ~ 1e-17) the residual is only
    # meaningful against the unit scale of those terms, not against F
    assert rel_gap(F1 - F0, g * dc, F1, F0, 1.0) < 1e-10
    r = r_secant(c1, c0, p)
    rho1c, rho0c = density(c1, p), density(c0, p)
    assert rel_gap(rho1c - rho0c, r * dc, rho1c, rho0c) < 1e-12


@given(
    c0=st.floats(min_value=0.0, max_value=1.0),
    c1=st.floats(min_value=0.0, max_value=1.0),
    ratio=st.sampled_from(RATIOS),
)
def test_secants_are_symmetric(c0, c1, ratio):
    p = PhysParams(rho1=ratio[0], rho2=ratio[1])
    assert g_secant(c1, c0, p) == g_secant(c0, c1, p)
    assert r_secant(c1, c0, p) == r_secant(c0, c1, p)


@given(c=st.floats(min_value=-0.2, max_value=1.2), ratio=st.sampled_from(RATIOS))
def test_secants_collapse_to_derivatives(c, ratio):
    p = PhysParams(rho1=ratio[0], rho2=ratio[1])
    assert rel_gap(g_secant(c, c, p), double_well_prime(c)) < 1e-13
    assert rel_gap(r_secant(c, c, p), drho_dc(c, p)) < 1e-13


@given(c=st.floats(min_value=0.0, max_value=1.0), ratio=st.sampled_from(RATIOS))
def test_density_bounds_on_unit_interval(c, ratio):
    p = PhysParams(rho1=ratio[0], rho2=ratio[1])
    rho = density(c, p)
    assert min(ratio) - 1e-12 <= rho <= max(ratio) + 1e-12


def test_double_well_nonnegative():
    c = np.linspace(-1.0, 2.0, 301)
    assert np.all(double_well(c) >= 0.0)


def test_rho0_defaults_to_rho2():
    p = PhysParams(rho1=1.0, rho2=10.0)
    assert p.rho0_value == 10.0
    assert p.rho0_defaulted
    q = PhysParams(rho1=1.0, rho2=10.0, rho0=3.0)
    assert q.rho0_value == 3.0
    assert not q.rho0_defaulted
