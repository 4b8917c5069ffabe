"""
Unit Tests for Test Cases

Initial vorticity fields, wave speeds and the polar vortex forcing.
"""

import math

import numpy as np
import pytest

# Add project root to path
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from bve.test_cases.test_cases import (
    OMEGA,
    POLAR_THETA0,
    ForcingConfig,
    TestCaseId,
    exact_rh4_vorticity,
    forcing_amplitude_A,
    forcing_F,
    forcing_shape_B,
    gaussian_vorticity,
    initial_vorticity,
    polar_vorticity,
    rh4_vorticity,
    rh_vorticity,
    rh_wave_speed,
)
from sphere.icosa_mesh.icosa_mesh import build_mesh, node_patch_areas


class TestRossbyHaurwitz:
    """Unit tests for the Rossby-Haurwitz wave."""

    def test_wave_is_stationary(self):
        """Test that the default wave has zero phase speed."""
        assert rh_wave_speed() == pytest.approx(0.0, abs=1e-15)

    def test_other_wavenumbers_move(self):
        """Test the phase speed formula away from the stationary case."""
        expected = (3 * 6 * 0.5 - 2.0 * OMEGA) / (4 * 5)
        assert rh_wave_speed(k=3, w=0.5) == pytest.approx(expected)

    def test_pole_and_equator(self):
        """Test values at the pole and on the equator."""
        assert float(rh4_vorticity(np.pi / 2, 0.0)) == pytest.approx(2.0 * math.pi / 7.0)
        assert float(rh4_vorticity(0.0, 1.3)) == 0.0

    def test_wavenumber_four_pattern(self):
        """Test the longitudinal period of pi / 2."""
        lat = np.full(8, 0.4)
        lon = np.linspace(-math.pi, math.pi, 8, endpoint=False)
        np.testing.assert_allclose(rh4_vorticity(lat, lon), rh4_vorticity(lat, lon + math.pi / 2),
                                   atol=1e-12)

    def test_general_form(self):
        """Test that the wavenumber-4 helper uses w = pi / 7."""
        assert float(rh_vorticity(0.3, 0.2)) == pytest.approx(float(rh4_vorticity(0.3, 0.2)))

    def test_exact_solution_is_time_invariant(self):
        """Test that the exact solution does not move for the stationary wave."""
        positions = build_mesh(2).vertices
        np.testing.assert_allclose(exact_rh4_vorticity(positions, 1.0),
                                   exact_rh4_vorticity(positions, 0.0), atol=1e-12)


class TestGaussianVortex:
    """Unit tests for the Gaussian vortex."""

    def test_total_vorticity_is_zero(self):
        """Test that the discrete mean is removed."""
        mesh = build_mesh(3)
        areas = node_patch_areas(mesh)
        zeta = gaussian_vorticity(mesh.vertices, areas)
        assert float(np.dot(zeta, areas)) == pytest.approx(0.0, abs=1e-12)

    def test_peak_is_near_center(self):
        """Test that the maximum lies at the particle closest to the center."""
        mesh = build_mesh(3)
        zeta = initial_vorticity(TestCaseId.GAUSSIAN_VORTEX, mesh.vertices, node_patch_areas(mesh))
        center = np.array([math.cos(math.pi / 20), 0.0, math.sin(math.pi / 20)])
        assert int(np.argmax(zeta)) == int(np.argmax(mesh.vertices @ center))


class TestPolarVortex:
    """Unit tests for the polar vortex."""

    def test_value_at_theta0(self):
        """Test that the envelope is one at theta0."""
        assert float(polar_vorticity(POLAR_THETA0)) == pytest.approx(math.pi * math.sin(POLAR_THETA0))

    def test_zonal(self):
        """Test that the field only depends on latitude."""
        mesh = build_mesh(2)
        zeta = initial_vorticity(TestCaseId.POLAR_VORTEX, mesh.vertices, node_patch_areas(mesh))
        assert zeta[0] == pytest.approx(float(polar_vorticity(math.pi / 2)))


class TestForcing:
    """Unit tests for the topographic forcing."""

    @pytest.mark.parametrize(
        "t, expected",
        [(-1.0, 0.0), (0.0, 0.0), (2.0, 0.5), (4.0, 1.0), (8.0, 1.0), (13.0, 0.5), (15.0, 0.0), (20.0, 0.0)],
    )
    def test_amplitude_ramp(self, t, expected):
        """Test the ramp-up, plateau and ramp-down of A(t)."""
        assert forcing_amplitude_A(t, 4.0, 15.0) == pytest.approx(expected, abs=1e-15)

    def test_shape_peaks_at_theta1(self):
        """Test that B is one at theta1 and zero at or below the equator."""
        theta1 = math.pi / 3
        assert float(forcing_shape_B(theta1, theta1)) == pytest.approx(1.0)
        np.testing.assert_array_equal(forcing_shape_B(np.array([0.0, -0.5, -math.pi / 2]), theta1), 0.0)

    def test_shape_is_bounded(self):
        """Test 0 <= B <= 1 on dense latitudes."""
        lat = np.linspace(-math.pi / 2, math.pi / 2, 10_000)
        shape = forcing_shape_B(lat, math.pi / 3)
        assert np.all(shape >= 0.0)
        assert np.all(shape <= 1.0 + 1e-15)

    def test_forcing_value(self):
        """Test F at the plateau, the forcing latitude and zero longitude."""
        cfg = ForcingConfig(k=2)
        value = forcing_F(np.array([math.pi / 3]), np.array([0.0]), 8.0, cfg)
        assert float(value[0]) == pytest.approx(0.6 * OMEGA * 4)
        assert cfg.amplitude == pytest.approx(3.0 / 5.0 * OMEGA * 4)

    def test_forcing_is_callable(self):
        """Test that the config evaluates the forcing field."""
        cfg = ForcingConfig(k=1)
        lat, lon = np.array([0.9, 0.9]), np.array([0.0, math.pi])
        values = cfg(lat, lon, 6.0)
        assert values[0] == pytest.approx(-values[1])

    @pytest.mark.parametrize(
        "kwargs",
        [{"k": 3}, {"k": 1, "tp": 8.0}, {"k": 1, "tp": 0.0}, {"k": 2, "theta1": 2.0}],
    )
    def test_invalid_config(self, kwargs):
        """Test that bad wavenumbers and schedules are rejected."""
        with pytest.raises(ValueError):
            ForcingConfig(**kwargs)
