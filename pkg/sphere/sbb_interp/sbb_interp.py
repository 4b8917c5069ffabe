"""Spherical Barycentric Bernstein Interpolation - degree-d fits on triangles."""

from dataclasses import dataclass
from functools import lru_cache
from typing import List, Tuple

import numpy as np
import structlog
from scipy.linalg import lu_factor, lu_solve

from sphere.geometry.geometry import (
    FloatArray,
    SphericalTriangle,
    barycentric_many,
    normalize,
    vertex_inverse,
)

logger = structlog.get_logger()

MIN_DEGREE = 1
MAX_DEGREE = 20
CONDITION_LIMIT = 1e12


class InterpolationError(Exception):
    """Custom exception for unusable interpolation configurations."""

    def __init__(self, message: str, condition: float = float("nan")) -> None:
        super().__init__(message)
        self.condition = condition


@dataclass(frozen=True, slots=True)
class InterpolationSpec:
    degree: int

    def __post_init__(self) -> None:
        if not MIN_DEGREE <= self.degree <= MAX_DEGREE:
            raise InterpolationError(
                f"Degree must be in [{MIN_DEGREE}, {MAX_DEGREE}], got {self.degree}"
            )

    @property
    def n_coeffs(self) -> int:
        return n_coeffs(self.degree)


@dataclass(frozen=True, slots=True, eq=False)
class ProxyPointSet:
    """Lattice points of one triangle, projected to the sphere.

    barycentric holds each point's coordinates relative to the triangle and
    equals the uniform lattice i/d, j/d, k/d.
    """

    corners: FloatArray
    degree: int
    points: FloatArray
    barycentric: FloatArray


@dataclass(frozen=True, slots=True, eq=False)
class SBBInterpolant:
    corners: FloatArray
    degree: int
    coeffs: FloatArray

    def __call__(self, p: FloatArray) -> FloatArray:
        return evaluate(self, p)


def n_coeffs(d: int) -> int:
    return (d + 1) * (d + 2) // 2


@lru_cache(maxsize=None)
def multi_indices(d: int) -> Tuple[Tuple[int, int, int], ...]:
    """Exponents (i, j, k) with i + j + k = d, k outer and j inner."""
    return tuple((d - j - k, j, k) for k in range(d + 1) for j in range(d + 1 - k))


def basis_eval(d: int, beta: FloatArray) -> FloatArray:
    """Monomials b1^i b2^j b3^k for each row of beta, shape (n, n_coeffs(d))."""
    beta = np.atleast_2d(np.asarray(beta, dtype=np.float64))
    exponents = np.array(multi_indices(d), dtype=np.float64)
    powers = beta[:, np.newaxis, :] ** exponents[np.newaxis, :, :]
    return powers.prod(axis=2)


def _lattice(d: int) -> FloatArray:
    return np.array(multi_indices(d), dtype=np.float64) / d


@lru_cache(maxsize=None)
def _factorized(d: int) -> Tuple[Tuple[FloatArray, FloatArray], float]:
    """LU factors of the lattice collocation matrix, shared by every triangle."""
    InterpolationSpec(d)
    vandermonde = basis_eval(d, _lattice(d))
    scaled = vandermonde / np.abs(vandermonde).max(axis=0)
    condition = float(np.linalg.cond(scaled))
    if not np.isfinite(condition) or condition > CONDITION_LIMIT:
        raise InterpolationError(
            f"Collocation matrix for degree {d} is ill-conditioned", condition=condition
        )
    logger.debug("Collocation matrix factorized", degree=d, condition=condition)
    return lu_factor(vandermonde), condition


def collocation_condition(d: int) -> float:
    """Condition estimate of the column-equilibrated collocation matrix."""
    return _factorized(d)[1]


def proxy_points(t: SphericalTriangle | FloatArray, d: int) -> ProxyPointSet:
    """Project the degree-d barycentric lattice of t onto the sphere."""
    corners = t.vertices if isinstance(t, SphericalTriangle) else np.asarray(t, dtype=np.float64)
    _factorized(d)
    lattice = _lattice(d)
    points = normalize(lattice @ corners)
    return ProxyPointSet(corners=corners, degree=d, points=points, barycentric=lattice)


def fit_coefficients(pts: ProxyPointSet, values: FloatArray) -> SBBInterpolant:
    """Solve for coefficients reproducing values at the proxy points.

    values may be (M,) or (M, D); every column shares one factorization.
    """
    values = np.asarray(values, dtype=np.float64)
    lu, _ = _factorized(pts.degree)
    if values.shape[0] != len(pts.points):
        raise InterpolationError(
            f"Expected {len(pts.points)} values, got {values.shape[0]}"
        )
    coeffs = lu_solve(lu, values)
    return SBBInterpolant(corners=pts.corners, degree=pts.degree, coeffs=coeffs)


def evaluate(interp: SBBInterpolant, p: FloatArray) -> FloatArray:
    """Evaluate an interpolant at one point (3,) or many points (n, 3)."""
    p = np.asarray(p, dtype=np.float64)
    single = p.ndim == 1
    beta, _ = barycentric_many(interp.corners, np.atleast_2d(p), vertex_inverse(interp.corners))
    values = basis_eval(interp.degree, beta) @ interp.coeffs
    return values[0] if single else values


def interpolation_matrix(d: int, beta: FloatArray) -> FloatArray:
    """Rows B(beta_i) V^-1 mapping proxy-point values to values at beta_i."""
    lu, _ = _factorized(d)
    basis = basis_eval(d, beta)
    return lu_solve(lu, basis.T, trans=1).T


def proxy_charges(d: int, moments: FloatArray) -> FloatArray:
    """Apply V^-T to source moments so proxy points carry equivalent charges."""
    lu, _ = _factorized(d)
    return lu_solve(lu, moments, trans=1)


def source_moments(d: int, beta: FloatArray, strengths: FloatArray) -> FloatArray:
    """Sum of B_k(beta_j) * q_j over sources j, shape (n_coeffs, D)."""
    basis = basis_eval(d, beta)
    q = np.asarray(strengths, dtype=np.float64)
    if q.ndim == 1:
        q = q[:, np.newaxis]
    return basis.T @ q


def degree_table(degrees: List[int]) -> List[Tuple[int, int, float]]:
    """(degree, n_coeffs, condition) for each degree that can be factorized."""
    rows = []
    for d in degrees:
        try:
            rows.append((d, n_coeffs(d), collocation_condition(d)))
        except InterpolationError as e:
            logger.warning("Degree skipped", degree=d, condition=e.condition)
    return rows
