"""AMR Stage - adaptive refinement and coarsening after each step."""

import time
from typing import Dict

import structlog

from bve.amr.amr import amr_step

logger = structlog.get_logger()


class StageError(Exception):
    """Custom exception for recoverable stage errors."""
    pass


class Stage:
    """AMR Stage - refines flagged triangles and merges quiet ones."""
    name: str = "amr"
    description: str = "Refine and coarsen the particle triangulation"
    version: str = "0.1.0"

    def run(self, state: Dict) -> Dict:
        cfg = state.get("config")
        field = state.get("field")
        if cfg is None or field is None:
            raise StageError("Run state is missing the field or configuration")

        amr = cfg.amr_config()
        if amr is None:
            return {}

        started = time.perf_counter()
        try:
            adapted = amr_step(field, amr)
        except Exception as e:
            raise StageError(f"AMR failed at step {state.get('step', 0)}: {e}") from e

        timings = dict(state.get("timings", {}))
        timings["amr"] = timings.get("amr", 0.0) + time.perf_counter() - started
        return {"field": adapted, "timings": timings}
