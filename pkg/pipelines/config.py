"""Run configuration - key=value parsing, validation and serialization."""

import math
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Tuple

import structlog
import yaml

from bve.solver.solver import AMRConfig, ForcingConfig, SolverConfig
from bve.test_cases.test_cases import TestCaseId
from sphere.sbb_interp.sbb_interp import MAX_DEGREE, MIN_DEGREE
from sphere.treecode.treecode import TraversalConfig

logger = structlog.get_logger()

MAX_MESH_LEVEL = 9
TREE_DEPTH_BELOW_MESH = 2
REQUIRED_KEYS = ("test_case", "mesh_level")
ENV_DEFAULTS = {
    "VORTFLOW_WORKERS": "workers",
    "VORTFLOW_OUTPUT_DIR": "output_dir",
}
_TRUE = {"true", "yes", "on", "1"}
_FALSE = {"false", "no", "off", "0"}


class ConfigError(Exception):
    """Custom exception for invalid run configurations."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)
        self.line = line


@dataclass(frozen=True)
class RunConfig:
    """Every setting of a run; times are in days."""

    test_case: str
    mesh_level: int
    summation: str = "fast"
    theta: float = 0.7
    degree: int = 6
    n_threshold: int = 32
    max_depth: int = 8
    dt_days: float = 0.01
    t_final_days: float = 1.0
    remesh_interval: int = 10
    amr_enabled: bool = False
    eps1: float = 0.0025
    eps2: float = 0.2
    amr_max_levels: int = 3
    forcing_k: int = 0
    forcing_tp: float = 4.0
    forcing_tf: float = 15.0
    forcing_theta1: float = math.pi / 3.0
    workers: int = 1
    output_dir: str = "output"
    snapshot_every_steps: int = 10

    @property
    def case(self) -> TestCaseId:
        return TestCaseId(self.test_case)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final_days / self.dt_days))

    def traversal_config(self) -> Optional[TraversalConfig]:
        if self.summation == "direct":
            return None
        return TraversalConfig(
            theta=self.theta,
            n_threshold=self.n_threshold,
            degree=self.degree,
            max_depth=self.max_depth,
            workers=self.workers,
        )

    def amr_config(self) -> Optional[AMRConfig]:
        if not self.amr_enabled:
            return None
        return AMRConfig(eps1=self.eps1, eps2=self.eps2, max_extra_levels=self.amr_max_levels)

    def forcing_config(self) -> Optional[ForcingConfig]:
        if self.forcing_k == 0:
            return None
        return ForcingConfig(
            k=self.forcing_k, tp=self.forcing_tp, tf=self.forcing_tf, theta1=self.forcing_theta1
        )

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            dt=self.dt_days,
            t_final=self.t_final_days,
            remesh_interval=self.remesh_interval,
            amr=self.amr_config(),
            forcing=self.forcing_config(),
            traversal=self.traversal_config(),
        )

    def with_overrides(self, **changes: Any) -> "RunConfig":
        updated = replace(self, **changes)
        validate_config(updated)
        return updated


_FIELD_TYPES: Dict[str, Any] = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, raw: Any, line: Optional[int]) -> Any:
    kind = _FIELD_TYPES[key]
    text = str(raw).strip()
    if kind is bool:
        if isinstance(raw, bool):
            return raw
        lowered = text.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ConfigError(f"'{key}' expects true or false, got '{text}'", line)
    if kind is int:
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"'{key}' expects an integer, got '{text}'", line)
        if not value.is_integer():
            raise ConfigError(f"'{key}' expects an integer, got '{text}'", line)
        return int(value)
    if kind is float:
        try:
            value = float(text)
        except ValueError:
            raise ConfigError(f"'{key}' expects a number, got '{text}'", line)
        if not math.isfinite(value):
            raise ConfigError(f"'{key}' must be finite, got '{text}'", line)
        return value
    if not text:
        raise ConfigError(f"'{key}' must not be empty", line)
    return text


def _range_errors(cfg: RunConfig) -> List[Tuple[str, str]]:
    """(key, message) for every value outside its allowed range."""
    checks = [
        ("test_case", cfg.test_case in {c.value for c in TestCaseId},
         f"unknown test case '{cfg.test_case}'"),
        ("mesh_level", 0 <= cfg.mesh_level <= MAX_MESH_LEVEL,
         f"mesh_level must be in [0, {MAX_MESH_LEVEL}]"),
        ("summation", cfg.summation in ("direct", "fast"), "summation must be direct or fast"),
        ("theta", 0.0 < cfg.theta <= 1.0, "theta must be in (0, 1]"),
        ("degree", MIN_DEGREE <= cfg.degree <= MAX_DEGREE,
         f"degree must be in [{MIN_DEGREE}, {MAX_DEGREE}]"),
        ("n_threshold", cfg.n_threshold >= 1, "n_threshold must be at least 1"),
        ("max_depth", cfg.max_depth >= 0, "max_depth must be non-negative"),
        ("dt_days", cfg.dt_days > 0.0, "dt_days must be positive"),
        ("t_final_days", cfg.t_final_days >= 0.0, "t_final_days must be non-negative"),
        ("remesh_interval", cfg.remesh_interval >= 0, "remesh_interval must be non-negative"),
        ("eps1", cfg.eps1 > 0.0, "eps1 must be positive"),
        ("eps2", cfg.eps2 > 0.0, "eps2 must be positive"),
        ("amr_max_levels", cfg.amr_max_levels >= 0, "amr_max_levels must be non-negative"),
        ("forcing_k", cfg.forcing_k in (0, 1, 2), "forcing_k must be 0, 1 or 2"),
        ("forcing_tp", 0.0 < cfg.forcing_tp < cfg.forcing_tf / 2.0,
         "forcing_tp must satisfy 0 < forcing_tp < forcing_tf / 2"),
        ("forcing_theta1", 0.0 < cfg.forcing_theta1 < math.pi / 2.0,
         "forcing_theta1 must be in (0, pi/2)"),
        ("workers", cfg.workers >= 1, "workers must be at least 1"),
        ("snapshot_every_steps", cfg.snapshot_every_steps >= 0,
         "snapshot_every_steps must be non-negative"),
    ]
    errors = [(key, message) for key, ok, message in checks if not ok]
    if cfg.forcing_k and cfg.test_case != TestCaseId.POLAR_VORTEX.value:
        errors.append(("forcing_k", "forcing applies to the polar_vortex test case only"))
    return errors


def validate_config(cfg: RunConfig, lines: Optional[Mapping[str, int]] = None) -> None:
    errors = _range_errors(cfg)
    if errors:
        key, message = errors[0]
        raise ConfigError(message, (lines or {}).get(key))


def config_from_mapping(
    values: Mapping[str, Any],
    lines: Optional[Mapping[str, int]] = None,
    defaults: Optional[Mapping[str, Any]] = None,
) -> RunConfig:
    """Build a validated config from raw values; defaults apply under values."""
    lines = lines or {}
    merged: Dict[str, Any] = dict(defaults or {})
    merged.update(values)
    converted: Dict[str, Any] = {}
    for key, raw in merged.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown key '{key}'", lines.get(key))
        converted[key] = _convert(key, raw, lines.get(key))
    for key in REQUIRED_KEYS:
        if key not in converted:
            raise ConfigError(f"missing required key '{key}'", max(lines.values(), default=0) + 1)
    if "max_depth" not in converted:
        converted["max_depth"] = converted["mesh_level"] + TREE_DEPTH_BELOW_MESH
    cfg = RunConfig(**converted)
    validate_config(cfg, lines)
    return cfg


def _read_pairs(text: str) -> Tuple[Dict[str, Any], Dict[str, int]]:
    """Raw values and the line each key was found on."""
    values: Dict[str, Any] = {}
    lines: Dict[str, int] = {}
    for number, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        for item in line.split(","):
            item = item.strip()
            if not item:
                continue
            if "=" not in item:
                raise ConfigError(f"expected key=value, got '{item}'", number)
            key, value = (part.strip() for part in item.split("=", 1))
            if key in values:
                raise ConfigError(f"duplicate key '{key}'", number)
            values[key] = value
            lines[key] = number
    return values, lines


def parse_config(text: str, defaults: Optional[Mapping[str, Any]] = None) -> RunConfig:
    """Parse key=value lines into a validated RunConfig.

    Args:
        text: Config text; '#' starts a comment and commas may separate pairs.
        defaults: Raw values used when a key is absent from text.

    Returns:
        RunConfig: Validated configuration.
    """
    values, lines = _read_pairs(text)
    return config_from_mapping(values, lines, defaults)


def _format(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def serialize_config(cfg: RunConfig) -> str:
    """Emit every key in field order so parse_config(serialize_config(c)) == c."""
    return "".join(f"{key}={_format(value)}\n" for key, value in asdict(cfg).items())


def env_defaults(environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    environ = os.environ if environ is None else environ
    return {key: environ[name] for name, key in ENV_DEFAULTS.items() if environ.get(name)}


def load_config(
    path: str,
    overrides: Optional[List[str]] = None,
    environ: Optional[Mapping[str, str]] = None,
) -> RunConfig:
    """Read a key=value or flat YAML config file and apply --set style overrides."""
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"Config file does not exist: {path}")
    text = config_path.read_text(encoding="utf-8")
    defaults = env_defaults(environ)

    if config_path.suffix.lower() in (".yaml", ".yml"):
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in {path}: {e}")
        if not isinstance(data, dict):
            raise ConfigError(f"YAML config must be a flat mapping: {path}")
        values: Dict[str, Any] = {str(k): v for k, v in data.items()}
        lines: Dict[str, int] = {}
    else:
        values, lines = _read_pairs(text)

    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got '{item}'")
        key, value = item.split("=", 1)
        values[key.strip()] = value.strip()
        lines.pop(key.strip(), None)

    cfg = config_from_mapping(values, lines, defaults)
    logger.info("Configuration loaded", path=str(config_path), test_case=cfg.test_case,
                mesh_level=cfg.mesh_level, summation=cfg.summation)
    return cfg


def write_run_config(cfg: RunConfig, output_dir: Path) -> Path:
    output_dir.mkdir(parents=True, exist_ok=True)
    path = output_dir / "run_config.yaml"
    path.write_text(yaml.safe_dump(asdict(cfg), sort_keys=False), encoding="utf-8")
    return path

