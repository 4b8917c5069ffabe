"""
Unit Tests for Benchmarks and Output Tables

Convolution benchmarks, degree sweeps and the CSV table helpers.
"""

import math

import numpy as np
import pytest

# Add project root to path
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from figures.figure_scripts import fit_slope, plot_scaling
from pipelines.bench import bench_convolution, bench_field, degree_sweep
from pipelines.config import ConfigError, parse_config
from pipelines.tables import (
    ERROR_COLUMNS,
    INTERACTION_COLUMNS,
    MESH_COLUMNS,
    export_mesh_csv,
    read_table,
    rows_to_columns,
    write_table,
)
from sphere.icosa_mesh.icosa_mesh import build_mesh, node_patch_areas


@pytest.fixture
def rh4_config():
    return parse_config("test_case=rh4\nmesh_level=2\nmax_depth=4\nn_threshold=8")


class TestTables:
    """Unit tests for the CSV helpers."""

    def test_integer_and_float_columns(self, tmp_path):
        """Test that integers stay integers and floats keep full precision."""
        path = write_table(tmp_path / "t.csv", {"n": np.array([1, 2]), "v": np.array([0.1, 1.0 / 3.0])})
        lines = path.read_text().splitlines()
        assert lines[0] == "n,v"
        assert lines[1] == "1,0.10000000000000001"
        data = read_table(path)
        assert data["v"][1] == 1.0 / 3.0

    def test_string_and_nan_columns(self, tmp_path):
        """Test phase names and NaN placeholders."""
        path = write_table(tmp_path / "t.csv", {"phase": ["direct"], "theta": [math.nan]})
        data = read_table(path)
        assert str(data["phase"][0]) == "direct"
        assert math.isnan(float(data["theta"][0]))

    def test_unequal_columns(self, tmp_path):
        """Test that ragged columns are rejected."""
        with pytest.raises(ValueError):
            write_table(tmp_path / "t.csv", {"a": [1, 2], "b": [1]})

    def test_rows_to_columns(self):
        """Test row dictionaries regrouped by column."""
        rows = [{"a": 1, "b": 2.0, "c": "x"}, {"a": 3, "b": 4.0, "c": "y"}]
        assert rows_to_columns(rows, ("b", "a")) == {"b": [2.0, 4.0], "a": [1, 3]}

    def test_export_mesh_csv(self, tmp_path):
        """Test the vertex table with node patch areas."""
        mesh = build_mesh(1)
        areas = node_patch_areas(mesh)
        data = read_table(export_mesh_csv(mesh, areas, tmp_path / "mesh.csv"))
        assert data.dtype.names == MESH_COLUMNS
        assert len(data) == 42
        assert float(np.sum(data["area"])) == pytest.approx(4.0 * math.pi)
        with pytest.raises(ValueError):
            export_mesh_csv(mesh, areas[:-1], tmp_path / "bad.csv")


class TestBenchConvolution:
    """Unit tests for the direct versus fast benchmark."""

    def test_bench_field(self, rh4_config):
        """Test the benchmark inputs at a mesh level."""
        positions, strengths, areas = bench_field(rh4_config, 1)
        assert positions.shape == (42, 3)
        assert strengths.shape == (42,)
        assert areas.sum() == pytest.approx(4.0 * math.pi)
        with pytest.raises(ConfigError):
            bench_field(rh4_config, 12)

    def test_writes_tables(self, rh4_config, tmp_path):
        """Test rows and the timings, errors and interactions tables."""
        rows = bench_convolution(rh4_config, [1, 2, 3], str(tmp_path))

        assert [row.n_particles for row in rows] == [42, 162, 642]
        assert all(row.rel_l2 < 1e-2 for row in rows)
        assert rows[-1].pc + rows[-1].cp + rows[-1].cc > 0

        timings = read_table(tmp_path / "timings.csv")
        assert len(timings) == 6
        assert sorted(set(timings["phase"].astype(str))) == ["direct", "fast"]

        errors = read_table(tmp_path / "errors.csv")
        assert errors.dtype.names == ERROR_COLUMNS
        np.testing.assert_array_equal(errors["n_particles"], [42, 162, 642])
        assert np.all(errors["theta"] == 0.7)

        interactions = read_table(tmp_path / "interactions.csv")
        assert interactions.dtype.names == INTERACTION_COLUMNS
        assert int(interactions["pp"][-1]) == rows[-1].pp

    def test_no_output_dir(self, rh4_config):
        """Test that rows are returned without writing files."""
        rows = bench_convolution(rh4_config, [0])
        assert rows[0].n_particles == 12
        assert rows[0].speedup > 0.0

    @pytest.mark.slow
    def test_scaling_over_levels_four_to_six(self, tmp_path):
        """Test near-linear fast scaling, quadratic direct scaling and the level-6 speedup."""
        config = parse_config("test_case=rh4\nmesh_level=4")
        rows = bench_convolution(config, [4, 5, 6], str(tmp_path))

        n = [row.n_particles for row in rows]
        assert fit_slope(n, [row.fast_seconds for row in rows]) < 1.35
        assert fit_slope(n, [row.direct_seconds for row in rows]) == pytest.approx(2.0, abs=0.2)
        assert rows[-1].n_particles == 40962
        assert rows[-1].speedup > 3.0

        slopes = plot_scaling(str(tmp_path / "timings.csv"), str(tmp_path / "scaling.png"))
        assert slopes["fast"] < slopes["direct"]


class TestDegreeSweep:
    """Unit tests for the interpolation degree sweep."""

    def test_error_falls_with_degree(self, rh4_config, tmp_path):
        """Test that higher degrees are more accurate and sweep.csv is written."""
        config = rh4_config.with_overrides(mesh_level=3, max_depth=5)
        rows = degree_sweep(config, [2, 4, 6, 8], output_dir=str(tmp_path))

        assert [row.degree for row in rows] == [2, 4, 6, 8]
        assert rows[-1].rel_l2 < rows[0].rel_l2
        sweep = read_table(tmp_path / "sweep.csv")
        assert sweep.dtype.names == ERROR_COLUMNS
        np.testing.assert_array_equal(sweep["degree"], [2, 4, 6, 8])
        assert np.all(sweep["n_particles"] == 642)

    @pytest.mark.slow
    def test_level_five_sweep(self):
        """Test that errors fall with degree within 10% and d=8 beats d=2 tenfold."""
        config = parse_config("test_case=rh4\nmesh_level=5")
        errors = [row.rel_l2 for row in degree_sweep(config, [2, 4, 6, 8])]

        assert all(later <= 1.1 * earlier for earlier, later in zip(errors, errors[1:]))
        assert errors[-1] < errors[0] / 10.0
