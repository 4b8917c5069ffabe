"""
Unit Tests for Run Configuration

Parsing, validation, serialization and the file, YAML and environment layers.
"""

import math

import pytest
import yaml

# Add project root to path
import sys
from pathlib import Path
sys.path.insert(0, str(Path(__file__).parent.parent))

from bve.test_cases.test_cases import TestCaseId
from pipelines.config import (
    ConfigError,
    RunConfig,
    env_defaults,
    load_config,
    parse_config,
    serialize_config,
    write_run_config,
)

GAUSSIAN_AMR = """\
# Gaussian vortex with adaptive refinement
test_case=gaussian_vortex
mesh_level=4
summation=fast
theta=0.7, degree=6
dt_days=0.01
t_final_days=1.0
amr_enabled=true
eps1=0.0025
eps2=0.2
"""


class TestParseConfig:
    """Unit tests for key=value parsing."""

    def test_defaults(self):
        """Test that only the required keys are needed."""
        cfg = parse_config("test_case=rh4\nmesh_level=3\n")
        assert cfg.case is TestCaseId.RH4
        assert cfg.summation == "fast"
        assert cfg.theta == 0.7
        assert cfg.degree == 6
        assert cfg.n_threshold == 32
        assert cfg.max_depth == 5
        assert cfg.dt_days == 0.01
        assert cfg.remesh_interval == 10
        assert cfg.amr_enabled is False
        assert cfg.n_steps == 100

    def test_max_depth_follows_mesh_level(self):
        """Test that the default tree goes two levels below the mesh."""
        assert parse_config("test_case=rh4\nmesh_level=2").max_depth == 4
        assert parse_config("test_case=rh4\nmesh_level=7").max_depth == 9
        assert parse_config("test_case=rh4\nmesh_level=7\nmax_depth=4").max_depth == 4

    def test_comments_blank_lines_and_commas(self):
        """Test comments, blank lines and comma separated pairs."""
        cfg = parse_config(GAUSSIAN_AMR)
        assert cfg.case is TestCaseId.GAUSSIAN_VORTEX
        assert cfg.amr_enabled is True
        assert cfg.amr_config().eps1 == 0.0025

    def test_theta_out_of_range_reports_line(self):
        """Test that theta=1.5 is rejected with its line number."""
        with pytest.raises(ConfigError) as exc:
            parse_config("test_case=rh4\nmesh_level=3\ntheta=1.5\n")
        assert exc.value.line == 3
        assert "theta" in str(exc.value)
        assert str(exc.value).startswith("line 3: ")

    def test_unknown_key(self):
        """Test that unknown keys are rejected with their line."""
        with pytest.raises(ConfigError, match="unknown key 'thetta'") as exc:
            parse_config("test_case=rh4\nthetta=0.5\nmesh_level=3")
        assert exc.value.line == 2

    def test_missing_required_key(self):
        """Test that a missing required key is reported after the last line."""
        with pytest.raises(ConfigError, match="mesh_level") as exc:
            parse_config("test_case=rh4\ntheta=0.5\n")
        assert exc.value.line == 3

    def test_duplicate_key(self):
        """Test that a key may appear only once."""
        with pytest.raises(ConfigError, match="duplicate") as exc:
            parse_config("test_case=rh4\nmesh_level=3\nmesh_level=4")
        assert exc.value.line == 3

    @pytest.mark.parametrize(
        "line",
        ["mesh_level=2.5", "mesh_level=ten", "amr_enabled=maybe", "theta=nan", "test_case=storm",
         "summation=fmm", "mesh_level=12", "degree=0", "dt_days=0"],
    )
    def test_bad_values(self, line):
        """Test type and range errors."""
        text = "test_case=rh4\nmesh_level=3\n".replace(line.split("=")[0] + "=", "#") + line
        with pytest.raises(ConfigError):
            parse_config(text)

    def test_missing_equals(self):
        """Test that a line without '=' is rejected."""
        with pytest.raises(ConfigError, match="key=value"):
            parse_config("test_case=rh4\nmesh_level 3")

    def test_forcing_needs_polar_vortex(self):
        """Test that forcing only applies to the polar vortex."""
        with pytest.raises(ConfigError, match="polar_vortex"):
            parse_config("test_case=rh4\nmesh_level=3\nforcing_k=1")
        cfg = parse_config("test_case=polar_vortex\nmesh_level=3\nforcing_k=2\nt_final_days=15")
        assert cfg.forcing_config().k == 2
        assert cfg.solver_config().forcing.amplitude == pytest.approx(0.6 * 2 * math.pi * 4)

    def test_direct_summation_has_no_traversal(self):
        """Test the derived solver config."""
        cfg = parse_config("test_case=rh4\nmesh_level=2\nsummation=direct")
        assert cfg.traversal_config() is None
        assert cfg.solver_config().summation == "direct"
        assert parse_config("test_case=rh4\nmesh_level=2").traversal_config().theta == 0.7


class TestSerializeConfig:
    """Unit tests for config serialization."""

    def test_round_trip(self):
        """Test that a parsed config survives serialize and parse."""
        cfg = parse_config(GAUSSIAN_AMR)
        assert parse_config(serialize_config(cfg)) == cfg

    def test_every_key_is_emitted(self):
        """Test one line per field with lowercase booleans."""
        text = serialize_config(parse_config(GAUSSIAN_AMR))
        assert "amr_enabled=true\n" in text
        assert text.splitlines()[0] == "test_case=gaussian_vortex"
        assert len(text.splitlines()) == len(RunConfig.__dataclass_fields__)

    def test_overrides_validate(self):
        """Test that overrides go through validation."""
        cfg = parse_config("test_case=rh4\nmesh_level=3")
        assert cfg.with_overrides(degree=8).degree == 8
        with pytest.raises(ConfigError):
            cfg.with_overrides(theta=0.0)


class TestLoadConfig:
    """Unit tests for config files, YAML and environment defaults."""

    def test_key_value_file_with_overrides(self, tmp_path):
        """Test --set style overrides on a key=value file."""
        path = tmp_path / "run.cfg"
        path.write_text("test_case=rh4\nmesh_level=3\ntheta=0.5\n")
        cfg = load_config(str(path), ["theta=0.9", "summation=direct"], environ={})
        assert cfg.theta == 0.9
        assert cfg.summation == "direct"

    def test_yaml_file(self, tmp_path):
        """Test a flat YAML mapping."""
        path = tmp_path / "run.yaml"
        path.write_text(yaml.safe_dump({"test_case": "polar_vortex", "mesh_level": 2, "amr_enabled": True}))
        cfg = load_config(str(path), environ={})
        assert cfg.case is TestCaseId.POLAR_VORTEX
        assert cfg.amr_enabled is True

    def test_yaml_must_be_mapping(self, tmp_path):
        """Test that YAML lists are rejected."""
        path = tmp_path / "run.yaml"
        path.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(str(path), environ={})

    def test_environment_defaults(self, tmp_path):
        """Test that environment values apply only when the file is silent."""
        environ = {"VORTFLOW_WORKERS": "3", "VORTFLOW_OUTPUT_DIR": str(tmp_path / "env")}
        assert env_defaults(environ) == {"workers": "3", "output_dir": str(tmp_path / "env")}

        path = tmp_path / "run.cfg"
        path.write_text("test_case=rh4\nmesh_level=2\nworkers=2\n")
        cfg = load_config(str(path), environ=environ)
        assert cfg.workers == 2
        assert cfg.output_dir == str(tmp_path / "env")

    def test_missing_file(self, tmp_path):
        """Test that a missing file is a config error."""
        with pytest.raises(ConfigError, match="does not exist"):
            load_config(str(tmp_path / "absent.cfg"))

    @pytest.mark.parametrize("name", ["rh4.cfg", "gaussian_amr.cfg", "polar_forced.yaml"])
    def test_shipped_configs(self, name):
        """Test that the example configs are valid."""
        path = Path(__file__).parent.parent / "configs" / name
        cfg = load_config(str(path), environ={})
        assert cfg.n_steps >= 100

    def test_write_run_config(self, tmp_path):
        """Test that the effective config is written as YAML."""
        cfg = parse_config(GAUSSIAN_AMR)
        path = write_run_config(cfg, tmp_path / "out")
        data = yaml.safe_load(path.read_text())
        assert data["test_case"] == "gaussian_vortex"
        assert data["amr_enabled"] is True
        assert RunConfig(**data) == cfg
