"""Icosahedral Mesh - nested triangulations, triangle trees and particle binning."""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import structlog
from numpy.typing import NDArray

from sphere.geometry.geometry import (
    CONTAINMENT_TOL,
    FloatArray,
    GeometryError,
    SphericalTriangle,
    barycentric_many,
    circumcenters,
    containment_score,
    great_circle_distance,
    normalize,
    signed_volume,
    spherical_triangle_area,
    tangent_basis,
    vertex_inverse,
)

logger = structlog.get_logger()

IntArray = NDArray[np.int64]

N_ROOTS = 20
_EMPTY = np.empty(0, dtype=np.int64)


class MeshError(Exception):
    """Custom exception for invalid meshes and failed point location."""
    pass


@dataclass(slots=True, eq=False)
class TriangleNode:
    """A node of the 20-root triangle tree.

    Mesh trees carry corner ids into a particle array; treecode trees only
    carry geometry. Children are ordered corner 0, corner 1, corner 2, center.
    """

    node_id: int
    level: int
    vertices: FloatArray
    vertex_ids: Optional[Tuple[int, int, int]] = None
    parent: Optional["TriangleNode"] = None
    children: List["TriangleNode"] = field(default_factory=list)
    particle_indices: IntArray = field(default_factory=lambda: _EMPTY)
    split: bool = False
    _circumcenter: Optional[FloatArray] = None
    _radius: Optional[float] = None
    _inverse: Optional[FloatArray] = None

    @property
    def triangle(self) -> SphericalTriangle:
        return SphericalTriangle(self.vertices[0], self.vertices[1], self.vertices[2])

    @property
    def circumcenter(self) -> FloatArray:
        if self._circumcenter is None:
            self._circumcenter = circumcenters(self.vertices[np.newaxis])[0]
        return self._circumcenter

    @property
    def radius(self) -> float:
        if self._radius is None:
            self._radius = float(great_circle_distance(self.circumcenter, self.vertices[0]))
        return self._radius

    @property
    def inverse(self) -> FloatArray:
        if self._inverse is None:
            self._inverse = vertex_inverse(self.vertices)
        return self._inverse

    @property
    def is_leaf(self) -> bool:
        return not self.children

    def __len__(self) -> int:
        return len(self.particle_indices)


class IcosaTree:
    """Forest of 20 root triangles refined by edge-midpoint subdivision.

    Geometric trees materialize children on demand while binning. Mesh trees
    are materialized from an IcosaMesh and may be refined or coarsened later.
    """

    def __init__(self, roots: List[TriangleNode], max_depth: int) -> None:
        if len(roots) != N_ROOTS:
            raise MeshError(f"Expected {N_ROOTS} root triangles, got {len(roots)}")
        self.roots = roots
        self.max_depth = max_depth
        self.epoch = 0
        self.edge_midpoints: Dict[Tuple[int, int], int] = {}
        self._next_id = 1 + max(node.node_id for node in self.iter_nodes())
        self._binned: List[TriangleNode] = []

    @classmethod
    def geometric(cls, max_depth: int) -> "IcosaTree":
        """Tree over the base icosahedron without corner ids."""
        base = build_base_icosahedron()
        corners = base.vertices[base.faces]
        roots = [TriangleNode(node_id=f, level=0, vertices=corners[f]) for f in range(N_ROOTS)]
        return cls(roots, max_depth)

    def new_id(self) -> int:
        node_id = self._next_id
        self._next_id += 1
        return node_id

    def iter_nodes(self) -> Iterator[TriangleNode]:
        """Depth-first pre-order over materialized nodes."""
        stack = list(reversed(self.roots))
        while stack:
            node = stack.pop()
            yield node
            stack.extend(reversed(node.children))

    def leaves(self) -> List[TriangleNode]:
        return [node for node in self.iter_nodes() if not node.children]

    def binned_leaves(self) -> List[TriangleNode]:
        """Nonempty bins that were not split by the last binning."""
        return [node for node in self._binned if not node.split and len(node.particle_indices)]

    def children_of(self, node: TriangleNode) -> List[TriangleNode]:
        """Return the children, subdividing geometrically if needed."""
        if not node.children:
            v0, v1, v2 = node.vertices
            m01, m12, m20 = normalize(np.stack([v0 + v1, v1 + v2, v2 + v0]))
            for corners in ((v0, m01, m20), (m01, v1, m12), (m20, m12, v2), (m01, m12, m20)):
                node.children.append(
                    TriangleNode(
                        node_id=self.new_id(),
                        level=node.level + 1,
                        vertices=np.stack(corners),
                        parent=node,
                    )
                )
        return node.children

    def clear_bins(self) -> None:
        for node in self._binned:
            node.particle_indices = _EMPTY
            node.split = False
        self._binned = []


@dataclass(slots=True, eq=False)
class IcosaMesh:
    """Nested icosahedral triangulation.

    Vertices of coarser levels keep their ids at finer levels. faces holds the
    finest level; faces_by_level[l] holds every level, children of face f at
    level l are faces 4f..4f+3 at level l+1.
    """

    vertices: FloatArray
    faces: IntArray
    level: int
    faces_by_level: List[IntArray]

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def build_face_tree(self) -> IcosaTree:
        """Materialize the full mesh tree with corner ids."""
        node_id = 0
        previous: List[TriangleNode] = []
        roots: List[TriangleNode] = []
        for level, faces in enumerate(self.faces_by_level):
            corners = self.vertices[faces]
            current: List[TriangleNode] = []
            for f in range(len(faces)):
                parent = previous[f // 4] if level else None
                node = TriangleNode(
                    node_id=node_id,
                    level=level,
                    vertices=corners[f],
                    vertex_ids=(int(faces[f, 0]), int(faces[f, 1]), int(faces[f, 2])),
                    parent=parent,
                )
                node_id += 1
                if parent is not None:
                    parent.children.append(node)
                current.append(node)
            if level == 0:
                roots = current
            previous = current
        return IcosaTree(roots, max_depth=self.level)


def _orient(vertices: FloatArray, faces: IntArray) -> IntArray:
    faces = faces.copy()
    for f in range(len(faces)):
        if signed_volume(vertices[faces[f]]) < 0.0:
            faces[f, [1, 2]] = faces[f, [2, 1]]
    return faces


def build_base_icosahedron() -> IcosaMesh:
    """Level-0 mesh: poles plus two rings of five at latitude +-atan(1/2)."""
    ring_lat = math.atan(0.5)
    upper = [(ring_lat, 2.0 * math.pi * k / 5.0) for k in range(5)]
    lower = [(-ring_lat, 2.0 * math.pi * k / 5.0 + math.pi / 5.0) for k in range(5)]
    points = [(0.0, 0.0, 1.0)]
    for lat, lon in upper + lower:
        points.append((math.cos(lat) * math.cos(lon), math.cos(lat) * math.sin(lon), math.sin(lat)))
    points.append((0.0, 0.0, -1.0))
    vertices = np.array(points, dtype=np.float64)

    north, south = 0, 11
    faces = []
    for k in range(5):
        u, u_next = 1 + k, 1 + (k + 1) % 5
        lo, lo_next = 6 + k, 6 + (k + 1) % 5
        faces.append((north, u, u_next))
        faces.append((u, lo, u_next))
        faces.append((lo, lo_next, u_next))
        faces.append((south, lo_next, lo))
    oriented = _orient(vertices, np.array(faces, dtype=np.int64))
    return IcosaMesh(vertices=vertices, faces=oriented, level=0, faces_by_level=[oriented])


def _refine_once(vertices: FloatArray, faces: IntArray) -> Tuple[FloatArray, IntArray]:
    edges = np.concatenate([faces[:, [0, 1]], faces[:, [1, 2]], faces[:, [2, 0]]])
    edges.sort(axis=1)
    unique_edges, inverse = np.unique(edges, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    n_faces = len(faces)
    midpoints = len(vertices) + inverse
    m01, m12, m20 = midpoints[:n_faces], midpoints[n_faces:2 * n_faces], midpoints[2 * n_faces:]
    new_vertices = normalize(vertices[unique_edges[:, 0]] + vertices[unique_edges[:, 1]])
    v0, v1, v2 = faces[:, 0], faces[:, 1], faces[:, 2]
    children = np.stack(
        [
            np.stack([v0, m01, m20], axis=1),
            np.stack([m01, v1, m12], axis=1),
            np.stack([m20, m12, v2], axis=1),
            np.stack([m01, m12, m20], axis=1),
        ],
        axis=1,
    ).reshape(-1, 3)
    return np.concatenate([vertices, new_vertices]), children


def refine_mesh(m: IcosaMesh, levels: int) -> IcosaMesh:
    """Subdivide every face `levels` times; the input mesh is left untouched."""
    if levels < 0:
        raise MeshError(f"Refinement levels must be non-negative, got {levels}")
    vertices, faces = m.vertices, m.faces
    faces_by_level = list(m.faces_by_level)
    for _ in range(levels):
        vertices, faces = _refine_once(vertices, faces)
        faces_by_level.append(faces)
    refined = IcosaMesh(
        vertices=vertices, faces=faces, level=m.level + levels, faces_by_level=faces_by_level
    )
    logger.debug("Mesh refined", level=refined.level, vertices=refined.n_vertices)
    return refined


def build_mesh(level: int) -> IcosaMesh:
    """Uniform icosahedral mesh with 10 * 4**level + 2 vertices."""
    return refine_mesh(build_base_icosahedron(), level)


def node_patch_areas(m: IcosaMesh) -> FloatArray:
    """Area of the circumcenter polygon around each vertex of the finest level."""
    return dual_polygon_areas(m.vertices, m.faces)


def dual_polygon_areas(vertices: FloatArray, faces: IntArray) -> FloatArray:
    """Fan-triangulated area of the polygon of incident-face circumcenters."""
    n_vertices = len(vertices)
    centers = circumcenters(vertices[faces])
    flat = faces.reshape(-1)
    incident_face = np.repeat(np.arange(len(faces)), 3)
    counts = np.bincount(flat, minlength=n_vertices)
    if np.any(counts < 3):
        raise MeshError("Every vertex needs at least three incident faces")

    e1, e2 = tangent_basis(vertices[flat])
    offset = centers[incident_face]
    angle = np.arctan2(np.sum(offset * e2, axis=1), np.sum(offset * e1, axis=1))
    order = np.lexsort((angle, flat))
    sorted_faces = incident_face[order]
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    areas = np.zeros(n_vertices)
    for valence in np.unique(counts):
        owners = np.flatnonzero(counts == valence)
        ring = sorted_faces[starts[owners, np.newaxis] + np.arange(valence)]
        corners = centers[ring]
        hub = np.broadcast_to(vertices[owners, np.newaxis, :], corners.shape)
        following = np.roll(corners, -1, axis=1)
        areas[owners] = spherical_triangle_area(hub, corners, following).sum(axis=1)
    return areas


def kite_areas(positions: FloatArray, faces: IntArray) -> FloatArray:
    """Per-vertex dual areas accumulated from corner kites of each face.

    Each corner receives the signed areas of (corner, edge midpoint,
    circumcenter) for its two edges. Works on conforming and hanging-node
    triangulations; on uniform meshes it matches node_patch_areas.
    """
    corners = positions[faces]
    center = circumcenters(corners)
    total = np.zeros(len(positions))
    for k in range(3):
        here = corners[:, k]
        after = corners[:, (k + 1) % 3]
        before = corners[:, (k + 2) % 3]
        mid_after = normalize(here + after)
        mid_before = normalize(here + before)
        kite = spherical_triangle_area(here, mid_after, center) + spherical_triangle_area(
            here, center, mid_before
        )
        total += np.bincount(faces[:, k], weights=kite, minlength=len(positions))
    return total


def _containment_scores(
    points: FloatArray,
    corner_sets: List[FloatArray],
    inverses: Optional[List[FloatArray]] = None,
) -> FloatArray:
    """(n, k) smallest barycentric coordinate of each point in each candidate."""
    scores = np.empty((len(points), len(corner_sets)))
    for k, corners in enumerate(corner_sets):
        try:
            inverse = inverses[k] if inverses is not None else None
            beta, total = barycentric_many(corners, points, inverse)
        except GeometryError:
            scores[:, k] = -np.inf
            continue
        scores[:, k] = containment_score(beta, total)
    return scores


def _choose(scores: FloatArray) -> NDArray[np.int64]:
    """First containing candidate per row, else the least violated one."""
    inside = scores >= -CONTAINMENT_TOL
    return np.where(inside.any(axis=1), inside.argmax(axis=1), scores.argmax(axis=1))


def bin_particles(
    tree: IcosaTree,
    positions: FloatArray,
    leaf_capacity: int = 0,
    max_depth: Optional[int] = None,
) -> IcosaTree:
    """Assign every particle to exactly one node per level it reaches.

    A node is split while its bin holds more than leaf_capacity particles and
    its level is below max_depth. Particles on a shared edge go to the first
    containing child in child order. Bins hold ascending particle indices.
    """
    depth_limit = tree.max_depth if max_depth is None else max_depth
    positions = np.asarray(positions, dtype=np.float64)
    tree.clear_bins()
    tree.epoch += 1

    everyone = np.arange(len(positions), dtype=np.int64)
    root_scores = _containment_scores(
        positions, [r.vertices for r in tree.roots], [r.inverse for r in tree.roots]
    )
    if np.any(np.isneginf(root_scores.max(axis=1))):
        raise MeshError("Particle is contained in no root triangle")
    choice = _choose(root_scores)

    stack: List[Tuple[TriangleNode, IntArray]] = []
    for k in reversed(range(N_ROOTS)):
        stack.append((tree.roots[k], everyone[choice == k]))
    while stack:
        node, members = stack.pop()
        node.particle_indices = members
        node.split = False
        tree._binned.append(node)
        if len(members) <= leaf_capacity or node.level >= depth_limit or not len(members):
            continue
        children = tree.children_of(node)
        node.split = True
        picked = _choose(
            _containment_scores(
                positions[members], [c.vertices for c in children], [c.inverse for c in children]
            )
        )
        for k in reversed(range(len(children))):
            stack.append((children[k], members[picked == k]))
    logger.debug("Particles binned", particles=len(positions), epoch=tree.epoch)
    return tree


def _deformed_corners(node: TriangleNode, deformed_vertices: FloatArray) -> FloatArray:
    if node.vertex_ids is None:
        raise MeshError("Point location needs a mesh tree with corner ids")
    return deformed_vertices[list(node.vertex_ids)]


def locate_many(
    tree: IcosaTree, deformed_vertices: FloatArray, points: FloatArray
) -> Tuple[List[TriangleNode], int]:
    """Locate each point in the leaf of the deformed mesh tree containing it.

    Descends from the roots using current particle positions for every node's
    corners. Points inside no candidate follow the least-violated candidate.

    Returns:
        tuple: The leaf for each point and the number of fallback decisions.
    """
    points = np.asarray(points, dtype=np.float64)
    found: List[TriangleNode] = [tree.roots[0]] * len(points)
    fallbacks = 0
    stack: List[Tuple[List[TriangleNode], IntArray]] = [
        (tree.roots, np.arange(len(points), dtype=np.int64))
    ]
    while stack:
        candidates, members = stack.pop()
        corners = [_deformed_corners(node, deformed_vertices) for node in candidates]
        scores = _containment_scores(points[members], corners)
        choice = _choose(scores)
        best = scores[np.arange(len(members)), choice]
        fallbacks += int(np.count_nonzero(best < -CONTAINMENT_TOL))
        for k, node in enumerate(candidates):
            chosen = members[choice == k]
            if not len(chosen):
                continue
            if node.children:
                stack.append((node.children, chosen))
            else:
                for index in chosen:
                    found[int(index)] = node
    if fallbacks:
        logger.warning("Point location used least-violated fallback", count=fallbacks)
    return found, fallbacks


def locate_deformed_triangle(
    tree: IcosaTree, deformed_vertices: FloatArray, p: FloatArray
) -> TriangleNode:
    """Leaf of the deformed mesh tree that contains p."""
    leaves, _ = locate_many(tree, deformed_vertices, np.asarray(p, dtype=np.float64)[np.newaxis])
    return leaves[0]


def leaf_faces(tree: IcosaTree) -> Tuple[List[TriangleNode], IntArray]:
    """Leaves in depth-first order with their corner ids as an (n, 3) array."""
    leaves = tree.leaves()
    ids = np.array([node.vertex_ids for node in leaves], dtype=np.int64).reshape(-1, 3)
    return leaves, ids
