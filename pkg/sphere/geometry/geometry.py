"""Sphere Geometry - unit vectors, great circles and spherical triangles."""

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence, Tuple

import numpy as np
import structlog
from numpy.typing import NDArray

logger = structlog.get_logger()

FloatArray = NDArray[np.float64]

# Unit vectors are plain float64 arrays of shape (3,) or (n, 3).
UnitVector3 = FloatArray

UNIT_TOL = 1e-12
CONTAINMENT_TOL = 1e-10
_DEGENERACY_TOL = 1e-15


class GeometryError(Exception):
    """Custom exception for degenerate spherical geometry."""
    pass


@dataclass(frozen=True, slots=True)
class LatLon:
    """Latitude in [-pi/2, pi/2] and longitude in [-pi, pi), radians."""

    lat: float
    lon: float


class BarycentricCoords(NamedTuple):
    b1: float
    b2: float
    b3: float


@dataclass(frozen=True, slots=True, eq=False)
class SphericalTriangle:
    """Three distinct unit vectors in counterclockwise order seen from outside."""

    v1: UnitVector3
    v2: UnitVector3
    v3: UnitVector3

    def __post_init__(self) -> None:
        corners = self.vertices
        if np.any(np.abs(np.linalg.norm(corners, axis=1) - 1.0) > 1e-9):
            raise GeometryError("Triangle corners must be unit vectors")
        for a, b in ((0, 1), (1, 2), (2, 0)):
            if np.linalg.norm(corners[a] - corners[b]) < _DEGENERACY_TOL:
                raise GeometryError("Triangle corners must be distinct")
        if signed_volume(corners) <= 0.0:
            raise GeometryError("Triangle corners must be counterclockwise")

    @property
    def vertices(self) -> FloatArray:
        return np.stack([self.v1, self.v2, self.v3])


def normalize(v: FloatArray) -> FloatArray:
    """Project vectors onto the unit sphere along the last axis."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v, axis=-1, keepdims=True)
    if np.any(norm < _DEGENERACY_TOL):
        raise GeometryError("Cannot normalize a zero vector")
    return v / norm


def signed_volume(corners: FloatArray) -> float:
    """Triple product v1 . (v2 x v3); positive for counterclockwise corners."""
    return float(np.dot(corners[0], np.cross(corners[1], corners[2])))


def latlon_to_unit(p: LatLon) -> UnitVector3:
    """Convert a latitude/longitude pair to a unit vector."""
    if not -math.pi / 2 <= p.lat <= math.pi / 2:
        raise GeometryError(f"Latitude out of range: {p.lat}")
    return latlon_to_xyz(np.asarray(p.lat), np.asarray(p.lon))


def latlon_to_xyz(lat: FloatArray, lon: FloatArray) -> FloatArray:
    """Vectorized latitude/longitude to unit vectors, shape (..., 3)."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    cos_lat = np.cos(lat)
    return np.stack([cos_lat * np.cos(lon), cos_lat * np.sin(lon), np.sin(lat)], axis=-1)


def unit_to_latlon(v: UnitVector3) -> LatLon:
    """Convert a unit vector to latitude/longitude; longitude is 0 at the poles."""
    v = np.asarray(v, dtype=np.float64)
    if abs(float(np.linalg.norm(v)) - 1.0) > UNIT_TOL:
        raise GeometryError("Expected a unit vector")
    lat, lon = xyz_to_latlon(v[np.newaxis, :])
    return LatLon(float(lat[0]), float(lon[0]))


def xyz_to_latlon(xyz: FloatArray) -> Tuple[FloatArray, FloatArray]:
    """Vectorized inverse of latlon_to_xyz for (n, 3) unit vectors."""
    xyz = np.asarray(xyz, dtype=np.float64)
    x, y, z = xyz[..., 0], xyz[..., 1], xyz[..., 2]
    lat = np.arcsin(np.clip(z, -1.0, 1.0))
    lon = np.arctan2(y, x)
    lon = np.where(np.hypot(x, y) < 1e-14, 0.0, lon)
    lon = np.where(lon >= math.pi, lon - 2.0 * math.pi, lon)
    return lat, lon


def great_circle_distance(a: FloatArray, b: FloatArray) -> FloatArray:
    """Arc length between unit vectors, stable for near and antipodal pairs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cross = np.cross(a, b)
    dot = np.sum(a * b, axis=-1)
    return np.arctan2(np.linalg.norm(cross, axis=-1), dot)


def vertex_inverse(corners: FloatArray) -> FloatArray:
    """Inverse of the matrix whose columns are the triangle corners."""
    matrix = np.asarray(corners, dtype=np.float64).T
    det = np.linalg.det(matrix)
    if abs(det) < _DEGENERACY_TOL:
        raise GeometryError("Triangle corners are coplanar with the origin")
    return np.linalg.inv(matrix)


def barycentric_many(
    corners: FloatArray, points: FloatArray, inverse: FloatArray | None = None
) -> Tuple[FloatArray, FloatArray]:
    """Normalized barycentric coordinates of many points in one triangle.

    Args:
        corners: (3, 3) triangle corners, one per row.
        points: (n, 3) query points.
        inverse: cached vertex_inverse(corners).

    Returns:
        tuple: (n, 3) coordinates summing to 1 and the (n,) raw sums. A raw sum
        that is not positive means the point lies in the opposite hemisphere.
    """
    if inverse is None:
        inverse = vertex_inverse(corners)
    raw = np.asarray(points, dtype=np.float64) @ inverse.T
    total = raw.sum(axis=1)
    safe = np.where(np.abs(total) < _DEGENERACY_TOL, 1.0, total)
    return raw / safe[:, np.newaxis], total


def spherical_barycentric(t: SphericalTriangle, p: UnitVector3) -> BarycentricCoords:
    """Barycentric coordinates of p relative to t, normalized to sum to 1."""
    beta, total = barycentric_many(t.vertices, np.asarray(p)[np.newaxis, :])
    if abs(total[0]) < _DEGENERACY_TOL:
        raise GeometryError("Point is not representable in this triangle")
    return BarycentricCoords(float(beta[0, 0]), float(beta[0, 1]), float(beta[0, 2]))


def containment_score(beta: FloatArray, total: FloatArray) -> FloatArray:
    """Smallest barycentric coordinate, or -inf for the opposite hemisphere."""
    return np.where(total > 0.0, beta.min(axis=1), -np.inf)


def circumcenters(corners: FloatArray) -> FloatArray:
    """Vectorized circumcenters for (n, 3, 3) triangle corners."""
    corners = np.asarray(corners, dtype=np.float64)
    v1, v2, v3 = corners[:, 0], corners[:, 1], corners[:, 2]
    normal = np.cross(v2 - v1, v3 - v1)
    norm = np.linalg.norm(normal, axis=1)
    if np.any(norm < _DEGENERACY_TOL):
        raise GeometryError("Degenerate triangle has no circumcenter")
    center = normal / norm[:, np.newaxis]
    flip = np.sum(center * (v1 + v2 + v3), axis=1) < 0.0
    center[flip] *= -1.0
    return center


def triangle_circumcenter(t: SphericalTriangle) -> UnitVector3:
    """Unit vector equidistant from the three corners on the corners' side."""
    return circumcenters(t.vertices[np.newaxis])[0]


def triangle_radius(t: SphericalTriangle) -> float:
    center = triangle_circumcenter(t)
    return float(great_circle_distance(center, t.v1))


def triangle_contains(t: SphericalTriangle, p: UnitVector3) -> bool:
    """Closed containment with a 1e-10 tolerance on each coordinate."""
    beta, total = barycentric_many(t.vertices, np.asarray(p)[np.newaxis, :])
    return bool(containment_score(beta, total)[0] >= -CONTAINMENT_TOL)


def spherical_triangle_area(a: FloatArray, b: FloatArray, c: FloatArray) -> FloatArray:
    """Signed area of the spherical triangle (a, b, c), vectorized over rows."""
    triple = np.sum(a * np.cross(b, c), axis=-1)
    denom = 1.0 + np.sum(a * b, axis=-1) + np.sum(b * c, axis=-1) + np.sum(c * a, axis=-1)
    return 2.0 * np.arctan2(triple, denom)


def spherical_polygon_area(vs: Sequence[UnitVector3]) -> float:
    """Area of a simple counterclockwise polygon via its spherical excess."""
    corners = np.asarray(vs, dtype=np.float64)
    n = len(corners)
    if n < 3:
        raise GeometryError("A spherical polygon needs at least 3 vertices")
    angle_sum = 0.0
    for k in range(n):
        prev_v, here, next_v = corners[k - 1], corners[k], corners[(k + 1) % n]
        to_prev = prev_v - np.dot(prev_v, here) * here
        to_next = next_v - np.dot(next_v, here) * here
        if np.linalg.norm(to_prev) < _DEGENERACY_TOL or np.linalg.norm(to_next) < _DEGENERACY_TOL:
            raise GeometryError("Polygon has repeated vertices")
        sin_part = np.dot(here, np.cross(to_next, to_prev))
        angle = math.atan2(sin_part, float(np.dot(to_next, to_prev)))
        if angle < 0.0:
            angle += 2.0 * math.pi
        angle_sum += angle
    return angle_sum - (n - 2) * math.pi


def tangent_basis(v: FloatArray) -> Tuple[FloatArray, FloatArray]:
    """Orthonormal tangent vectors (e1, e2) at each row of v, with e1 x e2 = v."""
    v = np.asarray(v, dtype=np.float64)
    helper = np.zeros_like(v)
    near_pole = np.abs(v[..., 2]) > 0.9
    helper[..., 2] = np.where(near_pole, 0.0, 1.0)
    helper[..., 0] = np.where(near_pole, 1.0, 0.0)
    e1 = np.cross(helper, v)
    e1 /= np.linalg.norm(e1, axis=-1, keepdims=True)
    e2 = np.cross(v, e1)
    return e1, e2
