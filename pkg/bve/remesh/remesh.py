"""Remesh - biquadratic interpolation from the deformed mesh onto fresh particles.

Values at a new point come from a degree-2 spherical Bernstein fit on the
six particles of the deformed parent triangle (three corners and three edge
midpoints) of the leaf containing it. Absolute vorticity is interpolated,
since it is carried unchanged by each particle.
"""

from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
import structlog

from bve.solver.solver import ParticleField
from bve.test_cases.test_cases import OMEGA
from sphere.geometry.geometry import FloatArray
from sphere.icosa_mesh.icosa_mesh import (
    IcosaMesh,
    TriangleNode,
    build_mesh,
    locate_many,
    node_patch_areas,
)
from sphere.sbb_interp.sbb_interp import basis_eval

logger = structlog.get_logger()

STENCIL_DEGREE = 2
STENCIL_SIZE = 6
STENCIL_CONDITION_LIMIT = 1e12
_DET_TOL = 1e-15


@lru_cache(maxsize=4)
def fresh_mesh(level: int) -> Tuple[IcosaMesh, FloatArray]:
    """Uniform mesh and node patch areas for a level; treat both as read-only."""
    mesh = build_mesh(level)
    return mesh, node_patch_areas(mesh)


def stencil_ids(node: TriangleNode) -> Optional[Tuple[int, ...]]:
    """Corner ids followed by edge-midpoint ids of a refined triangle."""
    if node.vertex_ids is None or len(node.children) != 4:
        return None
    center = node.children[3].vertex_ids
    if center is None:
        return None
    return tuple(node.vertex_ids) + tuple(center)


def _barycentric_batch(corners: FloatArray, points: FloatArray) -> Tuple[FloatArray, FloatArray]:
    """Normalized barycentric coordinates of points (G, n, 3) in triangles (G, 3, 3)."""
    matrices = np.swapaxes(corners, 1, 2)
    inverse = np.linalg.inv(matrices)
    raw = np.einsum("gij,gnj->gni", inverse, points)
    total = raw.sum(axis=2, keepdims=True)
    return raw / total, total[..., 0]


def fit_stencil(
    corners: FloatArray, stencil_points: FloatArray, values: FloatArray
) -> Tuple[FloatArray, np.ndarray]:
    """Degree-2 coefficients for each stencil.

    Args:
        corners: (G, 3, 3) deformed parent corners.
        stencil_points: (G, 6, 3) stencil particle positions.
        values: (G, 6, F) values carried by the stencil particles.

    Returns:
        tuple: (G, 6, F) coefficients and a (G,) mask of usable stencils.
    """
    n_groups = len(corners)
    coeffs = np.zeros((n_groups, STENCIL_SIZE, values.shape[2]))
    dets = np.linalg.det(np.swapaxes(corners, 1, 2))
    usable = np.abs(dets) > _DET_TOL
    if not np.any(usable):
        return coeffs, usable
    beta, _ = _barycentric_batch(corners[usable], stencil_points[usable])
    vandermonde = basis_eval(STENCIL_DEGREE, beta.reshape(-1, 3)).reshape(-1, STENCIL_SIZE, STENCIL_SIZE)
    condition = np.linalg.cond(vandermonde)
    well_posed = np.isfinite(condition) & (condition < STENCIL_CONDITION_LIMIT)
    usable_idx = np.flatnonzero(usable)
    good = usable_idx[well_posed]
    if len(good):
        coeffs[good] = np.linalg.solve(vandermonde[well_posed], values[good])
    usable[usable_idx[~well_posed]] = False
    return coeffs, usable


def eval_stencil(corners: FloatArray, coeffs: FloatArray, points: FloatArray) -> FloatArray:
    """Evaluate per-point fits: corners (P, 3, 3), coeffs (P, 6, F), points (P, 3)."""
    beta, _ = _barycentric_batch(corners, points[:, np.newaxis, :])
    basis = basis_eval(STENCIL_DEGREE, beta[:, 0, :])
    return np.einsum("pk,pkf->pf", basis, coeffs)


def interpolate_from_deformed(
    state: ParticleField, points: FloatArray, fields: FloatArray
) -> Tuple[FloatArray, int]:
    """Interpolate per-particle fields (N, F) of a deformed state to points (P, 3).

    Returns:
        tuple: (P, F) values and the number of points that fell back to linear
        interpolation on their leaf or needed a least-violated lookup.
    """
    points = np.asarray(points, dtype=np.float64)
    fields = np.asarray(fields, dtype=np.float64)
    if fields.ndim == 1:
        fields = fields[:, np.newaxis]
    leaves, lookup_fallbacks = locate_many(state.tree, state.positions, points)
    positions = state.positions

    groups: Dict[int, int] = {}
    stencil_nodes: List[TriangleNode] = []
    group_of = np.full(len(points), -1, dtype=np.int64)
    for p, leaf in enumerate(leaves):
        parent = leaf.parent
        if parent is None or stencil_ids(parent) is None:
            continue
        g = groups.get(parent.node_id)
        if g is None:
            g = len(stencil_nodes)
            groups[parent.node_id] = g
            stencil_nodes.append(parent)
        group_of[p] = g

    values = np.empty((len(points), fields.shape[1]))
    linear = group_of < 0
    if stencil_nodes:
        ids = np.array([stencil_ids(node) for node in stencil_nodes], dtype=np.int64)
        corners = positions[ids[:, :3]]
        coeffs, usable = fit_stencil(corners, positions[ids], fields[ids])
        quadratic = ~linear & usable[np.maximum(group_of, 0)]
        linear = ~quadratic
        chosen = group_of[quadratic]
        if len(chosen):
            values[quadratic] = eval_stencil(corners[chosen], coeffs[chosen], points[quadratic])

    if np.any(linear):
        picked = np.flatnonzero(linear)
        leaf_ids = np.array([leaves[p].vertex_ids for p in picked], dtype=np.int64)
        beta, _ = _barycentric_batch(positions[leaf_ids], points[picked][:, np.newaxis, :])
        values[picked] = np.einsum("pk,pkf->pf", beta[:, 0, :], fields[leaf_ids])

    fallbacks = lookup_fallbacks + int(np.count_nonzero(linear & (group_of >= 0)))
    return values, fallbacks


def _carried(state: ParticleField) -> FloatArray:
    return np.stack([state.absolute_vorticity(), state.initial_absolute_vorticity], axis=1)


def remesh(state: ParticleField) -> ParticleField:
    """Fresh uniform particles at the state's base level, valued from the deformed mesh."""
    mesh, areas = fresh_mesh(state.base_level)
    points = mesh.vertices
    values, fallbacks = interpolate_from_deformed(state, points, _carried(state))
    if fallbacks:
        logger.warning("Remesh used fallback interpolation", count=fallbacks)
    fresh = ParticleField(
        positions=points.copy(),
        vorticity=values[:, 0] - 2.0 * OMEGA * points[:, 2],
        areas=areas.copy(),
        initial_absolute_vorticity=values[:, 1],
        tree=mesh.build_face_tree(),
        base_level=state.base_level,
    )
    logger.info("✅ Remesh completed", n_particles=fresh.n_particles, fallbacks=fallbacks)
    return fresh


def sample_absolute_vorticity(
    state: ParticleField, points: FloatArray
) -> Tuple[FloatArray, FloatArray]:
    """Absolute and initial absolute vorticity of a deformed state at points."""
    values, _ = interpolate_from_deformed(state, points, _carried(state))
    return values[:, 0], values[:, 1]
