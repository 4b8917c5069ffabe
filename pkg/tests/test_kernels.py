"""
Unit Tests for Sphere Kernels

Green's function values, the Biot-Savart velocity kernel and source strengths.
"""

import math

import numpy as np
import pytest

# Add project root to path
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from sphere.geometry.geometry import normalize
from sphere.kernels.kernels import (
    INV_FOUR_PI,
    KERNELS,
    KernelSingularityError,
    bve_velocity_kernel,
    effective_source_strength,
    get_kernel,
    greens_log,
    greens_log_chord,
    velocity_kernel_chord,
)

X = np.array([1.0, 0.0, 0.0])
Y = np.array([0.0, 1.0, 0.0])


class TestGreensFunction:
    """Unit tests for the Laplace-Beltrami Green's function."""

    def test_orthogonal_points(self):
        """Test that the Green's function vanishes at orthogonal points."""
        assert greens_log(X, Y) == 0.0

    def test_antipodal_points(self):
        """Test the antipodal value -log(2) / (4 pi)."""
        assert greens_log(X, -X) == pytest.approx(-math.log(2.0) / (4.0 * math.pi), abs=1e-15)

    def test_coincident_points_raise(self):
        """Test that the singular pair is rejected."""
        with pytest.raises(KernelSingularityError):
            greens_log(X, X)

    def test_chord_form_matches_on_sphere(self):
        """Test that the chord form agrees for unit vectors."""
        rng = np.random.default_rng(2)
        for x, y in normalize(rng.normal(size=(10, 2, 3))):
            assert greens_log_chord(x, y) == pytest.approx(greens_log(x, y), abs=1e-12)


class TestVelocityKernel:
    """Unit tests for the Biot-Savart kernel."""

    def test_axis_pair(self):
        """Test that x=(1,0,0), y=(0,1,0) gives (0,0,1)."""
        np.testing.assert_allclose(bve_velocity_kernel(X, Y), [0.0, 0.0, 1.0], atol=1e-15)

    def test_coincident_points_raise(self):
        """Test that coincident points raise instead of returning infinities."""
        with pytest.raises(KernelSingularityError):
            bve_velocity_kernel(Y, Y)

    def test_tangent_to_sphere(self):
        """Test that kernel values are tangent at the target."""
        rng = np.random.default_rng(4)
        x = normalize(rng.normal(size=(6, 3)))
        y = normalize(rng.normal(size=(9, 3)))
        values = KERNELS["velocity"].pairwise(x, y)
        np.testing.assert_allclose(np.einsum("ijk,ik->ij", values, x), 0.0, atol=1e-12)

    def test_chord_form_matches_on_sphere(self):
        """Test that the chord denominator equals 1 - x.y on the sphere."""
        rng = np.random.default_rng(8)
        for x, y in normalize(rng.normal(size=(10, 2, 3))):
            np.testing.assert_allclose(velocity_kernel_chord(x, y), bve_velocity_kernel(x, y),
                                       rtol=1e-10, atol=1e-13)

    def test_excluded_pairs_are_zero(self):
        """Test that excluded diagonal pairs produce exact zeros."""
        points = normalize(np.random.default_rng(1).normal(size=(4, 3)))
        values = KERNELS["velocity"].pairwise(points, points, exclude=np.eye(4, dtype=bool))
        assert np.all(values[np.arange(4), np.arange(4)] == 0.0)
        assert np.all(np.isfinite(values))


class TestRegistry:
    """Unit tests for the kernel registry."""

    def test_prefactors(self):
        """Test that physical kernels carry -1/(4 pi) and the constant kernel carries 1."""
        assert get_kernel("velocity").prefactor == -INV_FOUR_PI
        assert get_kernel("log").prefactor == -INV_FOUR_PI
        assert get_kernel("constant").prefactor == 1.0
        assert get_kernel("velocity").dim == 3

    def test_unknown_kernel(self):
        """Test that unknown names list the available kernels."""
        with pytest.raises(KeyError, match="velocity"):
            get_kernel("yukawa")


class TestEffectiveSourceStrength:
    """Unit tests for convolution weights."""

    def test_unforced_is_vorticity_times_area(self):
        """Test the unforced weights."""
        weights = effective_source_strength(np.array([1.0, -2.0]), np.array([0.5, 0.25]))
        np.testing.assert_allclose(weights, [0.5, -0.5])

    def test_forcing_is_subtracted(self):
        """Test that a constant forcing of 6 pi / 5 shifts the weights by -6 pi / 5 * A."""
        areas = np.array([0.1, 0.2, 0.3])
        positions = np.array([X, Y, [0.0, 0.0, 1.0]])
        forcing = lambda lat, lon, t: np.full_like(lat, 6.0 * math.pi / 5.0)  # noqa: E731
        weights = effective_source_strength(np.zeros(3), areas, positions, 1.0, forcing)
        np.testing.assert_allclose(weights, -6.0 * math.pi / 5.0 * areas)

    def test_forcing_needs_positions(self):
        """Test that forcing without positions is rejected."""
        with pytest.raises(ValueError):
            effective_source_strength(np.zeros(2), np.ones(2), forcing=lambda lat, lon, t: lat)
