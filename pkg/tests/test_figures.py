"""
Unit Tests for Figure Scripts

Vorticity maps, scaling, convergence and sweep plots rendered from CSV files.
"""

import math

import numpy as np
import pytest

# Add project root to path
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from bve.solver.solver import ParticleField
from bve.test_cases.test_cases import TestCaseId, initial_vorticity
from figures.figure_scripts import (
    FigureError,
    SnapshotFrame,
    plot_degree_sweep,
    plot_error_convergence,
    plot_scaling,
    plot_vorticity_map,
    render_raster,
    symmetric_limit,
)
from pipelines.tables import write_table
from sphere.icosa_mesh.icosa_mesh import build_mesh, node_patch_areas
from stages.snapshot.snapshot import write_snapshot


def snapshot_file(path, level=3, zero=False):
    mesh = build_mesh(level)
    areas = node_patch_areas(mesh)
    vorticity = initial_vorticity(TestCaseId.RH4, mesh.vertices, areas)
    if zero:
        vorticity = np.zeros_like(vorticity)
    return write_snapshot(path, ParticleField.from_mesh(mesh, vorticity, areas), 0.0)


class TestVorticityMap:
    """Unit tests for snapshot maps."""

    def test_equirect_shows_wavenumber_four(self, tmp_path):
        """Test that the RH4 map alternates sign every 45 degrees at mid-latitude."""
        frame = SnapshotFrame.from_csv(str(snapshot_file(tmp_path / "s.csv")))
        raster = render_raster(frame, "equirect", resolution=64)

        assert raster.shape == (64, 128)
        row = raster[15]
        signs = np.sign(row[16 * np.arange(8)])
        np.testing.assert_array_equal(signs, [(-1) ** k for k in range(8)])

    def test_ortho_masks_the_corners(self, tmp_path):
        """Test that pixels off the disk are NaN."""
        frame = SnapshotFrame.from_csv(str(snapshot_file(tmp_path / "s.csv", level=2)))
        raster = render_raster(frame, "ortho", resolution=32)

        assert raster.shape == (32, 32)
        assert math.isnan(raster[0, 0])
        assert np.isfinite(raster[16, 16])

    def test_plot_writes_images(self, tmp_path):
        """Test both projections end up as PNG files."""
        snapshot = str(snapshot_file(tmp_path / "s.csv", level=2))
        for projection in ("ortho", "equirect"):
            out = tmp_path / f"{projection}.png"
            plot_vorticity_map(snapshot, projection, str(out), resolution=32)
            assert out.read_bytes()[:4] == b"\x89PNG"

    def test_zero_field_renders(self, tmp_path):
        """Test that an all-zero field uses a unit color scale."""
        snapshot = str(snapshot_file(tmp_path / "s.csv", level=1, zero=True))
        raster = plot_vorticity_map(snapshot, "equirect", str(tmp_path / "z.png"), resolution=16)
        assert symmetric_limit(raster) == 1.0
        assert (tmp_path / "z.png").exists()

    def test_missing_column(self, tmp_path):
        """Test that a snapshot without an area column is rejected."""
        path = write_table(tmp_path / "bad.csv", {
            "particle_id": [0], "x": [1.0], "y": [0.0], "z": [0.0],
            "lat": [0.0], "lon": [0.0], "vorticity": [1.0],
        })
        with pytest.raises(FigureError, match="area"):
            plot_vorticity_map(str(path), "ortho", str(tmp_path / "bad.png"))

    def test_missing_file(self, tmp_path):
        """Test that a missing snapshot is a figure error."""
        with pytest.raises(FigureError, match="does not exist"):
            SnapshotFrame.from_csv(str(tmp_path / "absent.csv"))

    def test_unknown_projection(self, tmp_path):
        """Test that only ortho and equirect are supported."""
        frame = SnapshotFrame.from_csv(str(snapshot_file(tmp_path / "s.csv", level=0)))
        with pytest.raises(FigureError, match="projection"):
            render_raster(frame, "mollweide")


class TestScalingPlots:
    """Unit tests for scaling, convergence and sweep plots."""

    def test_scaling_slope(self, tmp_path):
        """Test the fitted slope and that short series are skipped."""
        n = np.array([642, 2562, 10242, 642, 2562])
        path = write_table(tmp_path / "timings.csv", {
            "phase": ["direct", "direct", "direct", "fast", "fast"],
            "n_particles": n,
            "seconds": 1e-9 * n.astype(float) ** 2,
        })
        slopes = plot_scaling(str(path), str(tmp_path / "scaling.png"))

        assert list(slopes) == ["direct"]
        assert slopes["direct"] == pytest.approx(2.0)
        assert (tmp_path / "scaling.png").exists()

    def test_scaling_needs_three_sizes(self, tmp_path):
        """Test that no plottable series is an error."""
        path = write_table(tmp_path / "timings.csv", {
            "phase": ["fast", "fast"], "n_particles": [642, 2562], "seconds": [0.1, 0.4],
        })
        with pytest.raises(FigureError, match="three sizes"):
            plot_scaling(str(path), str(tmp_path / "scaling.png"))

    def test_convergence_slope(self, tmp_path):
        """Test the convergence slope of an error proportional to 1/N."""
        n = np.array([10242, 642, 2562])
        path = write_table(tmp_path / "errors.csv", {
            "n_particles": n, "theta": [0.7] * 3, "degree": [6.0] * 3,
            "rel_l2": 1.0 / n.astype(float), "rel_linf": 2.0 / n.astype(float),
            "wall_seconds": [1.0, 0.1, 0.3],
        })
        slope = plot_error_convergence(str(path), str(tmp_path / "convergence.png"))
        assert slope == pytest.approx(-1.0)

    def test_convergence_needs_two_rows(self, tmp_path):
        """Test that a single error row cannot be fitted."""
        path = write_table(tmp_path / "errors.csv", {"n_particles": [642], "rel_l2": [1e-3]})
        with pytest.raises(FigureError):
            plot_error_convergence(str(path), str(tmp_path / "convergence.png"))

    def test_degree_sweep_plot(self, tmp_path):
        """Test the error against runtime plot."""
        path = write_table(tmp_path / "sweep.csv", {
            "n_particles": [642] * 3, "theta": [0.7] * 3, "degree": [2, 4, 8],
            "rel_l2": [1e-2, 1e-4, 1e-7], "rel_linf": [2e-2, 2e-4, 2e-7],
            "wall_seconds": [0.1, 0.2, 0.6],
        })
        plot_degree_sweep(str(path), str(tmp_path / "sweep.png"))
        assert (tmp_path / "sweep.png").exists()

    def test_sweep_missing_column(self, tmp_path):
        """Test that a sweep table needs wall times."""
        path = write_table(tmp_path / "sweep.csv", {"degree": [2, 4], "rel_l2": [1e-2, 1e-4]})
        with pytest.raises(FigureError, match="wall_seconds"):
            plot_degree_sweep(str(path), str(tmp_path / "sweep.png"))
