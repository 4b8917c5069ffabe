#!/usr/bin/env python3
"""
vortflow: Simulation Pipeline

Runs one barotropic vorticity simulation on the rotating sphere. Stages are
executed in a fixed order per step: advance, AMR, remesh, snapshot.

Usage:
    python pipelines/simulation.py run.cfg
"""

import logging
import sys
import time
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import structlog

# Add project root to Python path
sys.path.insert(0, str(Path(__file__).parent.parent))

from bve.solver.solver import ParticleField
from pipelines.config import ConfigError, RunConfig, validate_config, write_run_config
from pipelines.tables import RUN_LOG_COLUMNS, TIMING_COLUMNS, rows_to_columns, write_table
from stages.advance.advance import Stage as AdvanceStage
from stages.amr.amr import Stage as AMRStage
from stages.error_report.error_report import Stage as ErrorReportStage
from stages.initialize.initialize import Stage as InitializeStage
from stages.remesh.remesh import Stage as RemeshStage
from stages.snapshot.snapshot import Stage as SnapshotStage

TIMING_PHASES = ("binning", "traversal", "evaluation", "direct", "remesh", "amr")


def configure_logging(level: str = "INFO") -> None:
    """Configure structured JSON logging on top of the stdlib root logger."""
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=level.upper(), force=True)
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer()
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


logger = structlog.get_logger()


class SimulationError(Exception):
    """Custom exception for aborted runs, carrying the failing step."""

    def __init__(self, message: str, step: int) -> None:
        super().__init__(f"step {step}: {message}")
        self.step = step


class SimulationPipeline:
    """vortflow main simulation orchestrator."""

    def __init__(
        self,
        config: RunConfig,
        output_dir: Optional[str] = None,
        reference_field: Optional[ParticleField] = None,
    ):
        self.config = config
        self.output_dir = Path(output_dir or config.output_dir)
        self.reference_field = reference_field

        # Initialize all stages
        self.initialize_stage = InitializeStage()
        self.advance_stage = AdvanceStage()
        self.amr_stage = AMRStage()
        self.remesh_stage = RemeshStage()
        self.snapshot_stage = SnapshotStage()
        self.error_report_stage = ErrorReportStage()

    def run(self) -> Dict:
        """Execute the full simulation and write every output table."""
        cfg = self.config
        logger.info("Starting vortflow simulation",
                    test_case=cfg.test_case,
                    mesh_level=cfg.mesh_level,
                    summation=cfg.summation,
                    n_steps=cfg.n_steps,
                    output_dir=str(self.output_dir))

        state: Dict = {
            "config": cfg,
            "output_dir": str(self.output_dir),
            "started_at": time.perf_counter(),
            "timings": {},
            "run_log": [],
            "snapshot_paths": [],
        }
        if self.reference_field is not None:
            state["reference_field"] = self.reference_field
        write_run_config(cfg, self.output_dir)

        try:
            logger.info("Phase 1: Initialization")
            state.update(self.initialize_stage.run(state))
            state.update(self.snapshot_stage.run(state))

            logger.info("Phase 2: Time stepping", n_steps=cfg.n_steps, dt=cfg.dt_days)
            for _ in range(cfg.n_steps):
                state.update(self.advance_stage.run(state))
                state.update(self.amr_stage.run(state))
                state.update(self.remesh_stage.run(state))
                state.update(self.snapshot_stage.run(state))

            logger.info("Phase 3: Reporting")
            state.update(self.error_report_stage.run(state))

        except Exception as e:
            step = state.get("step", 0)
            logger.error("Simulation failed", step=step, error=str(e), exc_info=True)
            self._write_reports(state)
            raise SimulationError(str(e), step) from e

        self._write_reports(state)
        field = state["field"]
        logger.info("Simulation completed successfully",
                    steps=state["step"],
                    n_particles=field.n_particles,
                    snapshots=len(state["snapshot_paths"]),
                    wall_seconds=time.perf_counter() - state["started_at"])
        return state

    def _write_reports(self, state: Dict) -> None:
        run_log: List[Dict] = state.get("run_log", [])
        state["run_log_path"] = str(
            write_table(self.output_dir / "run_log.csv", rows_to_columns(run_log, RUN_LOG_COLUMNS))
        )
        state["timings_path"] = str(write_timings(self.output_dir / "timings.csv", state))

    def validate_prerequisites(self) -> bool:
        """Validate that all prerequisites are met."""
        logger.info("Validating prerequisites...")

        try:
            validate_config(self.config)
            self.config.solver_config()
        except (ConfigError, ValueError) as e:
            logger.error("Invalid configuration", error=str(e))
            return False

        try:
            self.output_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            logger.error("Output directory is not writable", path=str(self.output_dir), error=str(e))
            return False

        if self.config.n_steps == 0 and self.config.t_final_days > 0.0:
            logger.warning("t_final_days is shorter than one step; only the initial state is written",
                           t_final_days=self.config.t_final_days, dt_days=self.config.dt_days)

        logger.info("Prerequisites validation passed")
        return True


def write_timings(path: Path, state: Dict) -> Path:
    """Per-phase wall time of a run: phase, n_particles, seconds."""
    timings: Dict[str, float] = state.get("timings", {})
    field = state.get("field")
    n_particles = field.n_particles if field is not None else 0
    phases = [phase for phase in TIMING_PHASES if phase in timings]
    phases += sorted(phase for phase in timings if phase not in TIMING_PHASES)
    return write_table(
        path,
        {
            "phase": np.array(phases, dtype=str),
            "n_particles": np.full(len(phases), n_particles, dtype=np.int64),
            "seconds": np.array([timings[phase] for phase in phases], dtype=np.float64),
        },
    )


def run_simulation(
    config: RunConfig, output_dir: Optional[str] = None, compare_direct: bool = False
) -> Dict:
    """Run one simulation; compare_direct adds a paired direct-summation run as reference.

    Args:
        config: Validated run configuration.
        output_dir: Overrides config.output_dir.
        compare_direct: Run the same configuration with direct summation first
            (written to <output_dir>/direct) and report errors against it.

    Returns:
        dict: Final run state.
    """
    root = Path(output_dir or config.output_dir)
    reference_field = None
    if compare_direct:
        if config.summation == "direct":
            logger.warning("Run already uses direct summation; ignoring --compare-direct")
        else:
            direct_config = config.with_overrides(summation="direct")
            direct_state = SimulationPipeline(direct_config, str(root / "direct")).run()
            reference_field = direct_state["field"]

    pipeline = SimulationPipeline(config, str(root), reference_field)
    if not pipeline.validate_prerequisites():
        raise SimulationError("Prerequisites validation failed", 0)
    return pipeline.run()


def main() -> int:
    """Main entry point."""
    from pipelines.cli import main as cli_main

    return cli_main(["run", *sys.argv[1:]])


if __name__ == "__main__":
    sys.exit(main())
