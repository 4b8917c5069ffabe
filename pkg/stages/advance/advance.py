"""Advance Stage - one RK4 step of the particle system."""

import time
from typing import Dict

import structlog

from bve.solver.solver import SolverError

logger = structlog.get_logger()

TREECODE_PHASES = ("binning", "traversal", "evaluation")


class StageError(Exception):
    """Custom exception for recoverable stage errors."""
    pass


class Stage:
    """Advance Stage - moves particles and updates relative vorticity."""
    name: str = "advance"
    description: str = "Advance particle positions and vorticity by one RK4 step"
    version: str = "0.1.0"

    def run(self, state: Dict) -> Dict:
        """Take one time step from the current state.

        Args:
            state (dict): Input/Output shared run state.

        Returns:
            dict: Updated slice with the advanced field, clock and timings.
        """
        field = state.get("field")
        solver = state.get("solver")
        cfg = state.get("config")
        if field is None or solver is None or cfg is None:
            raise StageError("Run state is missing the field, solver or configuration")

        step = state.get("step", 0)
        t = state.get("time", 0.0)
        treecode = solver.treecode
        before = dict(treecode.totals) if treecode is not None else {}
        started = time.perf_counter()
        try:
            advanced = solver.rk4_step(field, t, cfg.dt_days)
            advanced.validate()
        except SolverError as e:
            raise StageError(f"Step {step + 1} failed: {e}") from e
        elapsed = time.perf_counter() - started

        timings = dict(state.get("timings", {}))
        if treecode is None:
            timings["direct"] = timings.get("direct", 0.0) + elapsed
        else:
            for phase in TREECODE_PHASES:
                key = f"{phase}_seconds"
                spent = treecode.totals.get(key, 0.0) - before.get(key, 0.0)
                timings[phase] = timings.get(phase, 0.0) + spent

        logger.debug("Step advanced", step=step + 1, seconds=elapsed)
        return {
            "field": advanced,
            "step": step + 1,
            "time": (step + 1) * cfg.dt_days,
            "timings": timings,
        }
