"""Convolution benchmarks - direct versus fast summation timing and accuracy."""

import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import structlog

from bve.diagnostics.diagnostics import rel_l2_velocity_error, rel_linf_error
from bve.test_cases.test_cases import initial_vorticity
from pipelines.config import MAX_MESH_LEVEL, TREE_DEPTH_BELOW_MESH, ConfigError, RunConfig
from pipelines.tables import (
    ERROR_COLUMNS,
    INTERACTION_COLUMNS,
    TIMING_COLUMNS,
    rows_to_columns,
    write_table,
)
from sphere.geometry.geometry import FloatArray
from sphere.icosa_mesh.icosa_mesh import build_mesh, node_patch_areas
from sphere.kernels.kernels import effective_source_strength, get_kernel
from sphere.treecode.treecode import TraversalConfig, TreeCode, direct_sum

logger = structlog.get_logger()


@dataclass(frozen=True)
class BenchRow:
    level: int
    n_particles: int
    direct_seconds: float
    fast_seconds: float
    rel_l2: float
    rel_linf: float
    pp: int
    pc: int
    cp: int
    cc: int

    @property
    def speedup(self) -> float:
        return self.direct_seconds / self.fast_seconds if self.fast_seconds > 0 else float("inf")


@dataclass(frozen=True)
class SweepRow:
    n_particles: int
    theta: float
    degree: int
    rel_l2: float
    rel_linf: float
    wall_seconds: float


def _fast_traversal(config: RunConfig, level: int, degree: Optional[int] = None) -> TraversalConfig:
    """Traversal settings of config at a mesh level, used even when the run itself is direct."""
    return TraversalConfig(
        theta=config.theta,
        n_threshold=config.n_threshold,
        degree=config.degree if degree is None else degree,
        max_depth=max(config.max_depth, level + TREE_DEPTH_BELOW_MESH),
        workers=config.workers,
    )


def bench_field(config: RunConfig, level: int) -> Tuple[FloatArray, FloatArray, FloatArray]:
    """Positions, source strengths and areas of the config's test case at a level."""
    if not 0 <= level <= MAX_MESH_LEVEL:
        raise ConfigError(f"Benchmark level must be in [0, {MAX_MESH_LEVEL}], got {level}")
    mesh = build_mesh(level)
    areas = node_patch_areas(mesh)
    vorticity = initial_vorticity(config.case, mesh.vertices, areas)
    return mesh.vertices, effective_source_strength(vorticity, areas), areas


def _timed(fn: Callable[..., FloatArray], *args: object) -> Tuple[FloatArray, float]:
    started = time.perf_counter()
    result = fn(*args)
    return result, time.perf_counter() - started


def bench_convolution(
    config: RunConfig, levels: Sequence[int], output_dir: Optional[str] = None
) -> List[BenchRow]:
    """Time one velocity convolution per level with both summation paths.

    Args:
        config: Supplies the test case and traversal settings.
        levels: Mesh levels to benchmark.
        output_dir: When set, timings.csv, errors.csv and interactions.csv are
            written there.

    Returns:
        list: One BenchRow per level.
    """
    kernel = get_kernel("velocity")
    rows: List[BenchRow] = []
    for level in levels:
        positions, strengths, areas = bench_field(config, level)
        direct, direct_seconds = _timed(direct_sum, positions, strengths, kernel)
        treecode = TreeCode(_fast_traversal(config, level))
        fast, fast_seconds = _timed(treecode.sum, positions, strengths, kernel)
        counts = {key: int(treecode.stats[key]) for key in ("pp", "pc", "cp", "cc")}
        row = BenchRow(
            level=level,
            n_particles=len(positions),
            direct_seconds=direct_seconds,
            fast_seconds=fast_seconds,
            rel_l2=rel_l2_velocity_error(fast, direct, areas),
            rel_linf=rel_linf_error(fast, direct),
            **counts,
        )
        rows.append(row)
        logger.info("✅ Convolution benchmarked", level=level, n_particles=row.n_particles,
                    direct_seconds=direct_seconds, fast_seconds=fast_seconds,
                    speedup=row.speedup, rel_l2=row.rel_l2)

    if output_dir is not None:
        write_bench_tables(Path(output_dir), rows, _fast_traversal(config, config.mesh_level))
    return rows


def write_bench_tables(output_dir: Path, rows: Sequence[BenchRow], traversal: TraversalConfig) -> None:
    timing_rows: List[Dict[str, object]] = []
    for row in rows:
        timing_rows.append({"phase": "direct", "n_particles": row.n_particles,
                            "seconds": row.direct_seconds})
        timing_rows.append({"phase": "fast", "n_particles": row.n_particles,
                            "seconds": row.fast_seconds})
    write_table(output_dir / "timings.csv", rows_to_columns(timing_rows, TIMING_COLUMNS))

    error_rows = [
        {
            "n_particles": row.n_particles,
            "theta": traversal.theta,
            "degree": float(traversal.degree),
            "rel_l2": row.rel_l2,
            "rel_linf": row.rel_linf,
            "wall_seconds": row.fast_seconds,
        }
        for row in rows
    ]
    write_table(output_dir / "errors.csv", rows_to_columns(error_rows, ERROR_COLUMNS))
    write_table(
        output_dir / "interactions.csv",
        rows_to_columns([asdict(row) for row in rows], INTERACTION_COLUMNS),
    )


def degree_sweep(
    config: RunConfig,
    degrees: Sequence[int],
    level: Optional[int] = None,
    output_dir: Optional[str] = None,
) -> List[SweepRow]:
    """Error and runtime of one fast velocity convolution per interpolation degree."""
    level = config.mesh_level if level is None else level
    kernel = get_kernel("velocity")
    positions, strengths, areas = bench_field(config, level)
    direct = direct_sum(positions, strengths, kernel)

    rows: List[SweepRow] = []
    for degree in degrees:
        traversal = _fast_traversal(config, level, degree)
        fast, seconds = _timed(TreeCode(traversal).sum, positions, strengths, kernel)
        rows.append(
            SweepRow(
                n_particles=len(positions),
                theta=traversal.theta,
                degree=degree,
                rel_l2=rel_l2_velocity_error(fast, direct, areas),
                rel_linf=rel_linf_error(fast, direct),
                wall_seconds=seconds,
            )
        )
        logger.info("Degree swept", degree=degree, rel_l2=rows[-1].rel_l2, seconds=seconds)

    if output_dir is not None:
        path = Path(output_dir) / "sweep.csv"
        write_table(path, rows_to_columns([asdict(row) for row in rows], ERROR_COLUMNS))
        logger.info("✅ Degree sweep completed", path=str(path), degrees=list(degrees))
    return rows
