"""Remesh Stage - periodic reinterpolation onto a fresh particle set."""

import time
from typing import Dict

import structlog

from bve.amr.amr import remesh_adaptive
from bve.remesh.remesh import remesh

logger = structlog.get_logger()


class StageError(Exception):
    """Custom exception for recoverable stage errors."""
    pass


class Stage:
    """Remesh Stage - runs every remesh_interval steps; 0 disables it."""
    name: str = "remesh"
    description: str = "Interpolate the deformed field onto fresh regular particles"
    version: str = "0.1.0"

    def is_due(self, step: int, interval: int) -> bool:
        return interval > 0 and step > 0 and step % interval == 0

    def run(self, state: Dict) -> Dict:
        """Remesh when the step count reaches a multiple of the interval.

        Args:
            state (dict): Input/Output shared run state.

        Returns:
            dict: Updated slice with the fresh field, or nothing when not due.
        """
        cfg = state.get("config")
        field = state.get("field")
        if cfg is None or field is None:
            raise StageError("Run state is missing the field or configuration")

        step = state.get("step", 0)
        if not self.is_due(step, cfg.remesh_interval):
            return {}

        started = time.perf_counter()
        amr = cfg.amr_config()
        try:
            fresh = remesh(field) if amr is None else remesh_adaptive(field, amr)
        except Exception as e:
            raise StageError(f"Remesh failed at step {step}: {e}") from e

        timings = dict(state.get("timings", {}))
        timings["remesh"] = timings.get("remesh", 0.0) + time.perf_counter() - started
        remesh_count = state.get("remesh_count", 0) + 1
        logger.info("Remeshed particles", step=step, n_particles=fresh.n_particles,
                    remesh_count=remesh_count)
        return {"field": fresh, "timings": timings, "remesh_count": remesh_count}
