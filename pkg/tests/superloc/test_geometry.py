"""Test delays, arrival angles and their derivatives."""

import math

import numpy as np
import pytest

from superloc import geometry
from superloc.exceptions import DegenerateGeometryError
from superloc.models import Location

C = 3.0e8


def test_toa_los_is_distance_over_c():
    """Test that the LoS delay of a 3-4-5 triangle is 500 m / c."""
    assert geometry.toa_los(Location(300, 400), Location(0, 0), C) == pytest.approx(
        500 / C, rel=1e-15
    )


def test_doa_convention():
    """Test that angles are measured from +y towards +x."""
    base = Location(0, 0)
    assert geometry.doa(Location(0, 10), base) == 0.0
    assert geometry.doa(Location(10, 0), base) == pytest.approx(math.pi / 2)
    assert geometry.doa(Location(-10, 0), base) == pytest.approx(-math.pi / 2)
    assert geometry.doa(Location(10, 10), base) == pytest.approx(math.pi / 4)


def test_doa_maps_minus_pi_to_pi():
    """Test that a source straight behind the array reports +pi."""
    assert geometry.doa(Location(-0.0, -5), Location(0, 0)) == math.pi
    assert geometry.doa(Location(0, -5), Location(0, 0)) == math.pi


def test_doa_degenerate():
    """Test that a source on the BS has no direction of arrival."""
    with pytest.raises(DegenerateGeometryError):
        geometry.doa(Location(1, 1), Location(1, 1))
    with pytest.raises(DegenerateGeometryError):
        geometry.doa_gradient(Location(1, 1), Location(1, 1))


def test_toa_nlos_reduces_to_los():
    """Test that a scatter at the MS gives the LoS delay."""
    mobile, base = Location(120, 750), Location(1000, 0)
    assert geometry.toa_nlos(mobile, mobile, base, C) == geometry.toa_los(
        mobile, base, C
    )


def test_virtual_scatter_canonicalisation():
    """Test that LoS paths place their scatter at the MS."""
    mobile, base = Location(400, 600), Location(0, 1000)
    assert geometry.canonicalise_virtual_scatter(mobile, None) == mobile
    scatter = Location(10, 20)
    assert geometry.canonicalise_virtual_scatter(mobile, scatter) == scatter

    los = geometry.path_geometry(mobile, None, base, C)
    assert los.toa == pytest.approx(geometry.toa_los(mobile, base, C))
    assert los.doa == pytest.approx(geometry.doa(mobile, base))


def test_toa_gradients_match_finite_differences(rng):
    """Test the delay partials against central differences."""
    base = Location(0, 0)
    step = 1e-3
    for _ in range(20):
        mobile = Location(*rng.uniform(50, 950, 2))
        scatter = Location(*rng.uniform(50, 950, 2))
        grad_t, grad_s = geometry.toa_gradients(mobile, scatter, base, C)
        for axis in range(2):
            shift = np.eye(2)[axis] * step
            fd_t = (
                geometry.toa_nlos(mobile.shifted(*shift), scatter, base, C)
                - geometry.toa_nlos(mobile.shifted(*-shift), scatter, base, C)
            ) / (2 * step)
            fd_s = (
                geometry.toa_nlos(mobile, scatter.shifted(*shift), base, C)
                - geometry.toa_nlos(mobile, scatter.shifted(*-shift), base, C)
            ) / (2 * step)
            assert grad_t[axis] == pytest.approx(fd_t, rel=1e-5, abs=1e-15)
            assert grad_s[axis] == pytest.approx(fd_s, rel=1e-5, abs=1e-15)


def test_doa_gradient_matches_finite_differences(rng):
    """Test the angle partials against central differences."""
    base = Location(1000, 1000)
    step = 1e-3
    for _ in range(20):
        scatter = Location(*rng.uniform(50, 950, 2))
        grad = geometry.doa_gradient(scatter, base)
        for axis in range(2):
            shift = np.eye(2)[axis] * step
            fd = (
                geometry.doa(scatter.shifted(*shift), base)
                - geometry.doa(scatter.shifted(*-shift), base)
            ) / (2 * step)
            assert grad[axis] == pytest.approx(fd, rel=1e-5, abs=1e-10)


def test_coincident_mobile_and_scatter_rates():
    """Test the one-sided delay rates of a LoS path along the BS-MS axis.

    Moving l_t outwards lengthens only the mobile-scatter leg; moving l_s
    outwards lengthens both legs, so the rates are 1/c and 2/c.
    """
    base = Location(0, 0)
    mobile = Location(300, 400)
    axis = np.array([0.6, 0.8])
    eps = 1e-4
    tau0 = geometry.toa_nlos(mobile, mobile, base, C)
    moved = mobile.shifted(*(eps * axis))
    rate_t = (geometry.toa_nlos(moved, mobile, base, C) - tau0) / eps
    rate_s = (geometry.toa_nlos(mobile, moved, base, C) - tau0) / eps
    assert rate_t == pytest.approx(1 / C, rel=1e-6)
    assert rate_s == pytest.approx(2 / C, rel=1e-6)
    assert rate_s / rate_t == pytest.approx(2.0, rel=1e-6)

    grad_t, grad_s = geometry.toa_gradients(mobile, mobile, base, C)
    # l_t partial is the outward one-sided rate; moving both points is the LoS rate
    assert grad_t @ axis == pytest.approx(1 / C, rel=1e-12)
    assert (grad_t + grad_s) @ axis == pytest.approx(1 / C, rel=1e-12)
    assert np.all(np.isfinite(grad_s))


def test_vectorised_forms_match_scalar(rng):
    """Test that delays and angles agree with the scalar helpers."""
    base = np.array([1000.0, 0.0])
    mobiles = rng.uniform(50, 950, (8, 2))
    scatters = rng.uniform(50, 950, (8, 2))
    taus = geometry.delays(mobiles, scatters, base, C)
    thetas = geometry.angles(scatters, base)
    for k in range(8):
        m, s = Location.from_array(mobiles[k]), Location.from_array(scatters[k])
        b = Location.from_array(base)
        assert taus[k] == pytest.approx(geometry.toa_nlos(m, s, b, C), rel=1e-14)
        assert thetas[k] == pytest.approx(geometry.doa(s, b), rel=1e-14, abs=1e-14)
