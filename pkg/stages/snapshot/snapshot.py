"""Snapshot Stage - particle snapshots and the per-step run log."""

import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import structlog

from bve.diagnostics.diagnostics import absolute_vorticity_drift, total_vorticity
from bve.solver.solver import ForcingConfig, ParticleField
from pipelines.tables import write_table
from sphere.geometry.geometry import xyz_to_latlon

logger = structlog.get_logger()


class StageError(Exception):
    """Custom exception for recoverable stage errors."""
    pass


def snapshot_path(output_dir: Path, step: int) -> Path:
    return output_dir / f"snapshot_{step:06d}.csv"


def write_snapshot(
    path: Path, field: ParticleField, t: float, forcing: Optional[ForcingConfig] = None
) -> Path:
    """One row per particle; forced runs add the forcing value at time t."""
    lat, lon = xyz_to_latlon(field.positions)
    columns = {
        "particle_id": np.arange(field.n_particles, dtype=np.int64),
        "x": field.positions[:, 0],
        "y": field.positions[:, 1],
        "z": field.positions[:, 2],
        "lat": lat,
        "lon": lon,
        "vorticity": field.vorticity,
        "area": field.areas,
    }
    if forcing is not None:
        columns["forcing"] = forcing(lat, lon, t)
    return write_table(path, columns)


class Stage:
    """Snapshot Stage - logs every step and writes snapshots when due."""
    name: str = "snapshot"
    description: str = "Write particle snapshots and append the run log"
    version: str = "0.1.0"

    def is_due(self, step: int, every: int, n_steps: int) -> bool:
        if step == 0 or step == n_steps:
            return True
        return every > 0 and step % every == 0

    def run(self, state: Dict) -> Dict:
        """Record the current step.

        Args:
            state (dict): Input/Output shared run state.

        Returns:
            dict: Updated slice with the run log and snapshot paths.
        """
        cfg = state.get("config")
        field = state.get("field")
        output_dir = state.get("output_dir")
        if cfg is None or field is None or output_dir is None:
            raise StageError("Run state is missing the field, configuration or output directory")

        step = state.get("step", 0)
        t = state.get("time", 0.0)
        started = time.perf_counter()
        paths: List[str] = state.setdefault("snapshot_paths", [])
        if self.is_due(step, cfg.snapshot_every_steps, cfg.n_steps):
            try:
                path = write_snapshot(
                    snapshot_path(Path(output_dir), step), field, t, cfg.forcing_config()
                )
            except OSError as e:
                raise StageError(f"Failed to write snapshot for step {step}: {e}") from e
            paths.append(str(path))
            logger.info("✅ Snapshot written", step=step, path=str(path),
                        n_particles=field.n_particles)

        row = {
            "step": step,
            "time": t,
            "n_particles": field.n_particles,
            "total_vorticity": total_vorticity(field),
            "absolute_vorticity_drift": absolute_vorticity_drift(field),
            "wall_seconds": time.perf_counter() - state.get("started_at", started),
        }
        run_log: List[Dict] = state.setdefault("run_log", [])
        run_log.append(row)
        timings = dict(state.get("timings", {}))
        timings["snapshot"] = timings.get("snapshot", 0.0) + time.perf_counter() - started
        return {
            "run_log": run_log,
            "snapshot_paths": paths,
            "timings": timings,
        }
