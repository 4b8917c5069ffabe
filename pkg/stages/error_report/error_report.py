"""Error Report Stage - relative vorticity error against a reference solution."""

import math
import time
from pathlib import Path
from typing import Dict, Optional

import structlog

from bve.diagnostics.diagnostics import ErrorReport, error_report
from bve.remesh.remesh import sample_absolute_vorticity
from bve.solver.solver import ParticleField
from bve.test_cases.test_cases import OMEGA, TestCaseId, exact_rh4_vorticity
from pipelines.tables import ERROR_COLUMNS, rows_to_columns, write_table
from sphere.geometry.geometry import FloatArray

logger = structlog.get_logger()


class StageError(Exception):
    """Custom exception for recoverable stage errors."""
    pass


def reference_vorticity(field: ParticleField, reference: ParticleField) -> FloatArray:
    """Reference relative vorticity at the particles of field.

    Matching particle sets are compared label by label; otherwise the
    reference is interpolated from its own deformed mesh.
    """
    if reference.n_particles == field.n_particles:
        return reference.vorticity
    absolute, _ = sample_absolute_vorticity(reference, field.positions)
    return absolute - 2.0 * OMEGA * field.positions[:, 2]


class Stage:
    """Error Report Stage - writes errors.csv when a reference is available."""
    name: str = "error_report"
    description: str = "Compare final vorticity with the exact or direct-summation solution"
    version: str = "0.1.0"

    def run(self, state: Dict) -> Dict:
        """Compute E_N for the final state.

        Args:
            state (dict): Input/Output shared run state. An optional
                "reference_field" holds the paired direct-summation result.

        Returns:
            dict: Updated slice with the error report and errors.csv path,
            or nothing when no reference exists.
        """
        cfg = state.get("config")
        field = state.get("field")
        output_dir = state.get("output_dir")
        if cfg is None or field is None or output_dir is None:
            raise StageError("Run state is missing the field, configuration or output directory")

        reference_field: Optional[ParticleField] = state.get("reference_field")
        if reference_field is not None:
            label = "direct"
            reference = reference_vorticity(field, reference_field)
        elif cfg.case is TestCaseId.RH4:
            label = "exact"
            reference = exact_rh4_vorticity(field.positions, state.get("time", 0.0))
        else:
            logger.info("No reference solution available, skipping error table",
                        test_case=cfg.test_case)
            return {}

        try:
            report: ErrorReport = error_report(field.vorticity, reference, field.areas, label)
        except Exception as e:
            raise StageError(f"Failed to compute errors: {e}") from e

        direct = cfg.summation == "direct"
        row = {
            "n_particles": report.n_particles,
            "theta": math.nan if direct else cfg.theta,
            "degree": math.nan if direct else float(cfg.degree),
            "rel_l2": report.rel_l2,
            "rel_linf": report.rel_linf,
            "wall_seconds": time.perf_counter() - state.get("started_at", time.perf_counter()),
        }
        path = write_table(Path(output_dir) / "errors.csv", rows_to_columns([row], ERROR_COLUMNS))
        logger.info("✅ Error report completed", reference=label, rel_l2=report.rel_l2,
                    rel_linf=report.rel_linf, n_particles=report.n_particles)
        return {"error_report": report, "errors_path": str(path)}
