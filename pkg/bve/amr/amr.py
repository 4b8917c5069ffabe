"""AMR - circulation and variation driven refinement of the particle triangulation."""

from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import structlog

from bve.remesh.remesh import remesh, sample_absolute_vorticity
from bve.solver.solver import AMRConfig, ParticleField
from bve.test_cases.test_cases import OMEGA
from sphere.geometry.geometry import FloatArray, normalize, spherical_triangle_area
from sphere.icosa_mesh.icosa_mesh import IntArray, TriangleNode, kite_areas, leaf_faces

logger = structlog.get_logger()

# Maps new particle positions to (absolute vorticity, initial absolute vorticity).
Sampler = Callable[[FloatArray], Tuple[FloatArray, FloatArray]]


def triangle_criteria(
    positions: FloatArray,
    vorticity: FloatArray,
    faces: IntArray,
    cfg: AMRConfig,
    scale: float = 1.0,
) -> np.ndarray:
    """True where A * mean(zeta) >= scale * eps1 or max - min zeta >= scale * eps2.

    Areas are current spherical triangle areas of the corner particles.
    """
    if not len(faces):
        return np.zeros(0, dtype=bool)
    corners = positions[faces]
    area = np.abs(spherical_triangle_area(corners[:, 0], corners[:, 1], corners[:, 2]))
    values = vorticity[faces]
    circulation = area * values.mean(axis=1)
    variation = values.max(axis=1) - values.min(axis=1)
    return (circulation >= scale * cfg.eps1) | (variation >= scale * cfg.eps2)


def update_areas(state: ParticleField) -> ParticleField:
    """Recompute quadrature areas from the corner kites of the current leaves."""
    _, faces = leaf_faces(state.tree)
    return state.replace(areas=kite_areas(state.positions, faces))


def refine_leaves(
    state: ParticleField, leaves: List[TriangleNode], sampler: Optional[Sampler] = None
) -> ParticleField:
    """Split each leaf into four, adding particles at edge midpoints not yet present.

    New particles sit at the normalized midpoint of the current edge ends and
    take their values from sampler, by default the biquadratic interpolant of
    the state before refinement. Areas are left to the caller.
    """
    if not leaves:
        return state
    tree = state.tree
    positions = state.positions
    n_old = state.n_particles
    new_points: List[FloatArray] = []
    midpoint_of: Dict[Tuple[int, int], int] = {}

    def midpoint(a: int, b: int) -> int:
        key = (a, b) if a < b else (b, a)
        existing = tree.edge_midpoints.get(key, midpoint_of.get(key))
        if existing is not None:
            return existing
        index = n_old + len(new_points)
        new_points.append(normalize(positions[a] + positions[b]))
        midpoint_of[key] = index
        return index

    layouts = []
    for leaf in leaves:
        if leaf.vertex_ids is None or leaf.children:
            continue
        a, b, c = leaf.vertex_ids
        m01, m12, m20 = midpoint(a, b), midpoint(b, c), midpoint(c, a)
        layouts.append((leaf, ((a, m01, m20), (m01, b, m12), (m20, m12, c), (m01, m12, m20))))

    if new_points:
        added = np.array(new_points)
        sample = sampler or (lambda pts: sample_absolute_vorticity(state, pts))
        absolute, initial = sample(added)
        all_positions = np.concatenate([positions, added])
        vorticity = np.concatenate([state.vorticity, absolute - 2.0 * OMEGA * added[:, 2]])
        initial_absolute = np.concatenate([state.initial_absolute_vorticity, initial])
        areas = np.concatenate([state.areas, np.zeros(len(added))])
    else:
        all_positions, vorticity = positions, state.vorticity
        initial_absolute, areas = state.initial_absolute_vorticity, state.areas

    tree.edge_midpoints.update(midpoint_of)
    for leaf, children in layouts:
        for ids in children:
            leaf.children.append(
                TriangleNode(
                    node_id=tree.new_id(),
                    level=leaf.level + 1,
                    vertices=all_positions[list(ids)],
                    vertex_ids=ids,
                    parent=leaf,
                )
            )
    return state.replace(
        positions=all_positions,
        vorticity=vorticity,
        initial_absolute_vorticity=initial_absolute,
        areas=areas,
    )


def coarsen_candidates(state: ParticleField, cfg: AMRConfig) -> List[TriangleNode]:
    """Parents of four leaves, at or below the initial resolution, under both thresholds."""
    parents = [
        node
        for node in state.tree.iter_nodes()
        if node.level >= state.base_level
        and len(node.children) == 4
        and all(child.is_leaf for child in node.children)
    ]
    if not parents:
        return []
    faces = np.array([node.vertex_ids for node in parents], dtype=np.int64)
    keep_split = triangle_criteria(state.positions, state.vorticity, faces, cfg, cfg.hysteresis)
    return [node for node, busy in zip(parents, keep_split) if not busy]


def drop_unused_particles(state: ParticleField) -> Tuple[ParticleField, int]:
    """Remove particles no leaf refers to, keeping the order of the rest."""
    _, faces = leaf_faces(state.tree)
    used = np.zeros(state.n_particles, dtype=bool)
    used[faces.reshape(-1)] = True
    removed = int(np.count_nonzero(~used))
    if not removed:
        return state, 0
    new_index = np.cumsum(used) - 1
    tree = state.tree
    for node in tree.iter_nodes():
        if node.vertex_ids is not None:
            a, b, c = node.vertex_ids
            node.vertex_ids = (int(new_index[a]), int(new_index[b]), int(new_index[c]))
    survivors: Dict[Tuple[int, int], int] = {}
    for (a, b), m in tree.edge_midpoints.items():
        if used[a] and used[b] and used[m]:
            survivors[(int(new_index[a]), int(new_index[b]))] = int(new_index[m])
    tree.edge_midpoints = survivors
    trimmed = state.replace(
        positions=state.positions[used],
        vorticity=state.vorticity[used],
        areas=state.areas[used],
        initial_absolute_vorticity=state.initial_absolute_vorticity[used],
    )
    return trimmed, removed


def coarsen(state: ParticleField, parents: List[TriangleNode]) -> Tuple[ParticleField, int]:
    for node in parents:
        node.children = []
    return drop_unused_particles(state)


def amr_step(state: ParticleField, cfg: AMRConfig) -> ParticleField:
    """One refinement and coarsening pass over the current leaves."""
    leaves, faces = leaf_faces(state.tree)
    flagged = triangle_criteria(state.positions, state.vorticity, faces, cfg)
    max_level = state.base_level + cfg.max_extra_levels
    to_refine = [leaf for leaf, hot in zip(leaves, flagged) if hot and leaf.level < max_level]
    busy = {id(leaf.parent) for leaf in to_refine}
    to_coarsen = [node for node in coarsen_candidates(state, cfg) if id(node) not in busy]
    if not to_refine and not to_coarsen:
        return state

    refined = refine_leaves(state, to_refine)
    coarsened, removed = coarsen(refined, to_coarsen)
    result = update_areas(coarsened)
    logger.info(
        "✅ AMR step completed",
        refined=len(to_refine),
        coarsened=len(to_coarsen),
        removed_particles=removed,
        n_particles=result.n_particles,
    )
    return result


def adaptive_refine(state: ParticleField, cfg: AMRConfig, sampler: Sampler) -> ParticleField:
    """Refine flagged leaves pass by pass, up to max_extra_levels below the base."""
    for _ in range(cfg.max_extra_levels):
        leaves, faces = leaf_faces(state.tree)
        flagged = triangle_criteria(state.positions, state.vorticity, faces, cfg)
        to_refine = [leaf for leaf, hot in zip(leaves, flagged) if hot]
        if not to_refine:
            break
        state = refine_leaves(state, to_refine, sampler)
    return update_areas(state)


def remesh_adaptive(state: ParticleField, cfg: AMRConfig) -> ParticleField:
    """Remesh onto the uniform base mesh, then refine it from the deformed state."""

    def sampler(points: FloatArray) -> Tuple[FloatArray, FloatArray]:
        return sample_absolute_vorticity(state, points)

    fresh = adaptive_refine(remesh(state), cfg, sampler)
    logger.info("✅ Adaptive remesh completed", n_particles=fresh.n_particles)
    return fresh


def refinement_levels(state: ParticleField) -> Dict[int, int]:
    """Number of leaves per tree level."""
    counts: Dict[int, int] = {}
    for leaf in state.tree.leaves():
        counts[leaf.level] = counts.get(leaf.level, 0) + 1
    return counts
