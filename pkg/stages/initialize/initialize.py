"""Initialize Stage - build the particle mesh, the initial vorticity and the solver."""

import time
from typing import Dict, Tuple

import numpy as np
import structlog

from bve.amr.amr import Sampler, adaptive_refine
from bve.diagnostics.diagnostics import total_vorticity
from bve.solver.solver import BVESolver, ParticleField
from bve.test_cases.test_cases import OMEGA, TestCaseId, gaussian_bump, initial_vorticity
from sphere.geometry.geometry import FloatArray
from sphere.icosa_mesh.icosa_mesh import build_mesh, node_patch_areas

logger = structlog.get_logger()


class StageError(Exception):
    """Custom exception for recoverable stage errors."""
    pass


class Stage:
    """Initialize Stage - creates the particle field for the configured test case."""
    name: str = "initialize"
    description: str = "Build the icosahedral particle mesh and sample the initial vorticity"
    version: str = "0.1.0"

    def run(self, state: Dict) -> Dict:
        """Create particles, quadrature areas and the solver.

        Args:
            state (dict): Input/Output shared run state.

        Returns:
            dict: Updated slice with the particle field, solver and clock.
        """
        cfg = state.get("config")
        if cfg is None:
            raise StageError("No run configuration found in state")

        started = time.perf_counter()
        logger.info("Building particle mesh", level=cfg.mesh_level, test_case=cfg.test_case)
        try:
            mesh = build_mesh(cfg.mesh_level)
            areas = node_patch_areas(mesh)
            vorticity = initial_vorticity(cfg.case, mesh.vertices, areas)
            field = ParticleField.from_mesh(mesh, vorticity, areas)

            amr = cfg.amr_config()
            if amr is not None:
                field = adaptive_refine(field, amr, self._exact_sampler(cfg.case, mesh.vertices, areas))
            solver = BVESolver(cfg.solver_config())
        except Exception as e:
            raise StageError(f"Failed to initialize {cfg.test_case}: {e}") from e

        timings = dict(state.get("timings", {}))
        timings["initialize"] = timings.get("initialize", 0.0) + time.perf_counter() - started
        logger.info(
            "✅ Initialization completed",
            n_particles=field.n_particles,
            summation=solver.cfg.summation,
            total_vorticity=total_vorticity(field),
        )
        return {
            "field": field,
            "solver": solver,
            "time": 0.0,
            "step": 0,
            "timings": timings,
        }

    def _exact_sampler(
        self, case: TestCaseId, base_points: FloatArray, base_areas: FloatArray
    ) -> Sampler:
        """Initial condition at refinement points; the Gaussian keeps the base mesh mean."""
        offset = 0.0
        if case is TestCaseId.GAUSSIAN_VORTEX:
            bump = gaussian_bump(base_points)
            offset = float(np.dot(bump, base_areas) / np.sum(base_areas))

        def sampler(points: FloatArray) -> Tuple[FloatArray, FloatArray]:
            if case is TestCaseId.GAUSSIAN_VORTEX:
                zeta = gaussian_bump(points) - offset
            else:
                zeta = initial_vorticity(case, points, np.ones(len(points)))
            absolute = zeta + 2.0 * OMEGA * points[:, 2]
            return absolute, absolute.copy()

        return sampler
