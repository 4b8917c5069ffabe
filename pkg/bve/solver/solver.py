"""BVE Solver - Lagrangian particles, right-hand side and RK4 time stepping."""

import dataclasses
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
import structlog

from bve.test_cases.test_cases import OMEGA, ForcingConfig
from sphere.geometry.geometry import FloatArray, normalize
from sphere.icosa_mesh.icosa_mesh import IcosaMesh, IcosaTree, node_patch_areas
from sphere.kernels.kernels import Kernel, effective_source_strength, get_kernel
from sphere.treecode.treecode import TraversalConfig, TreeCode, direct_sum

logger = structlog.get_logger()

UNIT_NORM_TOL = 1e-10

__all__ = [
    "AMRConfig",
    "BVESolver",
    "ForcingConfig",
    "ParticleField",
    "SolverConfig",
    "SolverError",
    "rhs",
    "rk4_step",
    "stream_function",
]


class SolverError(Exception):
    """Custom exception for invalid solver states and configurations."""
    pass


@dataclass(slots=True, eq=False)
class ParticleField:
    """Particles carrying vorticity, quadrature areas and their triangulation.

    The corner ids of every node in tree index into the particle arrays, so a
    particle's index is also its mesh vertex id. Triangles below base_level are
    adaptive refinements.
    """

    positions: FloatArray
    vorticity: FloatArray
    areas: FloatArray
    initial_absolute_vorticity: FloatArray
    tree: IcosaTree
    base_level: int

    @classmethod
    def from_mesh(
        cls, mesh: IcosaMesh, vorticity: FloatArray, areas: Optional[FloatArray] = None
    ) -> "ParticleField":
        positions = mesh.vertices.copy()
        weights = node_patch_areas(mesh) if areas is None else np.asarray(areas, dtype=np.float64)
        vorticity = np.asarray(vorticity, dtype=np.float64).copy()
        return cls(
            positions=positions,
            vorticity=vorticity,
            areas=weights.copy(),
            initial_absolute_vorticity=vorticity + 2.0 * OMEGA * positions[:, 2],
            tree=mesh.build_face_tree(),
            base_level=mesh.level,
        )

    @property
    def n_particles(self) -> int:
        return len(self.positions)

    def absolute_vorticity(self) -> FloatArray:
        return self.vorticity + 2.0 * OMEGA * self.positions[:, 2]

    def replace(self, **changes: object) -> "ParticleField":
        return dataclasses.replace(self, **changes)

    def validate(self) -> None:
        n = self.n_particles
        for name in ("vorticity", "areas", "initial_absolute_vorticity"):
            if len(getattr(self, name)) != n:
                raise SolverError(f"Field '{name}' has {len(getattr(self, name))} entries, expected {n}")
        drift = np.abs(np.linalg.norm(self.positions, axis=1) - 1.0)
        if n and float(drift.max()) > UNIT_NORM_TOL:
            raise SolverError(f"Particle positions left the unit sphere by {float(drift.max()):.3e}")


@dataclass(frozen=True, slots=True)
class AMRConfig:
    """Refinement thresholds; coarsening uses hysteresis * threshold."""

    eps1: float
    eps2: float
    max_extra_levels: int = 3
    hysteresis: float = 0.9

    def __post_init__(self) -> None:
        if self.eps1 <= 0.0 or self.eps2 <= 0.0:
            raise SolverError("AMR thresholds must be positive")
        if self.max_extra_levels < 0:
            raise SolverError("max_extra_levels must be non-negative")
        if not 0.0 < self.hysteresis <= 1.0:
            raise SolverError("AMR hysteresis must be in (0, 1]")


@dataclass(frozen=True, slots=True)
class SolverConfig:
    """Time stepping setup; traversal=None selects direct summation."""

    dt: float = 0.01
    t_final: float = 1.0
    remesh_interval: int = 10
    amr: Optional[AMRConfig] = None
    forcing: Optional[ForcingConfig] = None
    traversal: Optional[TraversalConfig] = None

    def __post_init__(self) -> None:
        if self.dt <= 0.0:
            raise SolverError(f"dt must be positive, got {self.dt}")
        if self.t_final < 0.0:
            raise SolverError(f"t_final must be non-negative, got {self.t_final}")
        if self.remesh_interval < 0:
            raise SolverError(f"remesh_interval must be non-negative, got {self.remesh_interval}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))

    @property
    def summation(self) -> str:
        return "direct" if self.traversal is None else "fast"


class BVESolver:
    """Evaluates particle velocities and advances the particle system."""

    def __init__(self, cfg: SolverConfig) -> None:
        self.cfg = cfg
        self.kernel: Kernel = get_kernel("velocity")
        self.treecode = TreeCode(cfg.traversal) if cfg.traversal is not None else None

    def convolve(self, positions: FloatArray, strengths: FloatArray, kernel: Kernel) -> FloatArray:
        if self.treecode is None:
            return direct_sum(positions, strengths, kernel)
        return self.treecode.sum(positions, strengths, kernel)

    def velocities(
        self, positions: FloatArray, vorticity: FloatArray, areas: FloatArray, t: float
    ) -> FloatArray:
        strengths = effective_source_strength(vorticity, areas, positions, t, self.cfg.forcing)
        return self.convolve(positions, strengths, self.kernel)

    def _derivatives(
        self, positions: FloatArray, vorticity: FloatArray, areas: FloatArray, t: float
    ) -> Tuple[FloatArray, FloatArray]:
        u = self.velocities(positions, vorticity, areas, t)
        return u, -2.0 * OMEGA * u[:, 2]

    def rhs(self, state: ParticleField, t: float) -> Tuple[FloatArray, FloatArray]:
        """Velocities in radians/day and d(zeta)/dt = -2 Omega u_z."""
        return self._derivatives(state.positions, state.vorticity, state.areas, t)

    def rk4_step(self, state: ParticleField, t: float, dt: float) -> ParticleField:
        """Classical RK4 on (positions, vorticity), projecting every stage to the sphere."""
        x0, z0, areas = state.positions, state.vorticity, state.areas
        k1x, k1z = self._derivatives(x0, z0, areas, t)
        x1 = normalize(x0 + 0.5 * dt * k1x)
        k2x, k2z = self._derivatives(x1, z0 + 0.5 * dt * k1z, areas, t + 0.5 * dt)
        x2 = normalize(x0 + 0.5 * dt * k2x)
        k3x, k3z = self._derivatives(x2, z0 + 0.5 * dt * k2z, areas, t + 0.5 * dt)
        x3 = normalize(x0 + dt * k3x)
        k4x, k4z = self._derivatives(x3, z0 + dt * k3z, areas, t + dt)

        positions = normalize(x0 + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x))
        vorticity = z0 + (dt / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        return state.replace(positions=positions, vorticity=vorticity)

    def stream_function(self, state: ParticleField) -> FloatArray:
        """psi_i = sum_j G(x_i, x_j) zeta_j A_j with the log Green's function."""
        strengths = effective_source_strength(state.vorticity, state.areas)
        return self.convolve(state.positions, strengths, get_kernel("log"))[:, 0]


def rhs(state: ParticleField, t: float, cfg: SolverConfig) -> Tuple[FloatArray, FloatArray]:
    return BVESolver(cfg).rhs(state, t)


def rk4_step(state: ParticleField, t: float, dt: float, cfg: SolverConfig) -> ParticleField:
    return BVESolver(cfg).rk4_step(state, t, dt)


def stream_function(state: ParticleField, cfg: SolverConfig) -> FloatArray:
    return BVESolver(cfg).stream_function(state)
