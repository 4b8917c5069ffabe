"""Treecode - barycentric Lagrange dual tree traversal on the icosahedral tree.

Interactions between well-separated triangle pairs are approximated with
degree-d spherical Bernstein interpolation in the source (PC), the target
(CP) or both (CC). Everything else is summed directly (PP).
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
import structlog

from sphere.geometry.geometry import FloatArray, barycentric_many, great_circle_distance
from sphere.icosa_mesh.icosa_mesh import IcosaTree, IntArray, TriangleNode, bin_particles
from sphere.kernels.kernels import Kernel
from sphere.sbb_interp.sbb_interp import (
    InterpolationSpec,
    interpolation_matrix,
    proxy_charges,
    proxy_points,
    source_moments,
)

logger = structlog.get_logger()

# Upper bound on kernel entries materialized per block.
BLOCK_ENTRIES = 1 << 20

T = TypeVar("T")
R = TypeVar("R")


class TreecodeError(Exception):
    """Custom exception for invalid traversal configurations."""
    pass


class InteractionKind(str, Enum):
    PP = "PP"
    PC = "PC"
    CP = "CP"
    CC = "CC"


@dataclass(frozen=True, slots=True)
class TraversalConfig:
    """Treecode parameters; workers only changes speed, never results."""

    theta: float = 0.7
    n_threshold: int = 32
    degree: int = 6
    max_depth: int = 8
    workers: int = 1

    def __post_init__(self) -> None:
        if not 0.0 < self.theta <= 1.0:
            raise TreecodeError(f"theta must be in (0, 1], got {self.theta}")
        if self.n_threshold < 1:
            raise TreecodeError(f"n_threshold must be at least 1, got {self.n_threshold}")
        if self.max_depth < 0:
            raise TreecodeError(f"max_depth must be non-negative, got {self.max_depth}")
        if self.workers < 1:
            raise TreecodeError(f"workers must be at least 1, got {self.workers}")
        InterpolationSpec(self.degree)


@dataclass(frozen=True, slots=True)
class Interaction:
    target: TriangleNode
    source: TriangleNode
    kind: InteractionKind


class InteractionList(List[Interaction]):
    """Interactions in deterministic emission order."""

    def counts(self) -> Dict[str, int]:
        tally = {kind.value.lower(): 0 for kind in InteractionKind}
        for interaction in self:
            tally[interaction.kind.value.lower()] += 1
        return tally


@dataclass(frozen=True, slots=True, eq=False)
class Particles:
    """Targets, sources and source strengths of one convolution.

    When same_set is true targets and sources are the same particles and the
    pair (i, i) is excluded from every sum.
    """

    targets: FloatArray
    sources: FloatArray
    strengths: FloatArray
    same_set: bool = True

    @classmethod
    def self_interacting(cls, positions: FloatArray, strengths: FloatArray) -> "Particles":
        return cls(positions, positions, np.asarray(strengths, dtype=np.float64), True)


def mac_well_separated(tn: TriangleNode, sn: TriangleNode, theta: float) -> bool:
    """(r_t + r_s) / R < theta with arc distances; R = 0 never separates."""
    distance = float(great_circle_distance(tn.circumcenter, sn.circumcenter))
    if distance <= 0.0:
        return False
    return (tn.radius + sn.radius) / distance < theta


def _classify(n_targets: int, n_sources: int, n_threshold: int) -> InteractionKind:
    big_target = n_targets > n_threshold
    big_source = n_sources > n_threshold
    if big_target and big_source:
        return InteractionKind.CC
    if big_source:
        return InteractionKind.PC
    if big_target:
        return InteractionKind.CP
    return InteractionKind.PP


def dual_traversal(
    target_tree: IcosaTree, source_tree: IcosaTree, cfg: TraversalConfig
) -> InteractionList:
    """Classify every target/source pair of binned nodes, starting from the 400 root pairs.

    Each (target particle, source particle) pair is covered by exactly one
    emitted interaction. Unseparated pairs refine the node with the larger bin,
    ties going to the source; a node that cannot be refined yields PP.
    """
    interactions = InteractionList()

    def visit(tn: TriangleNode, sn: TriangleNode) -> None:
        n_targets, n_sources = len(tn.particle_indices), len(sn.particle_indices)
        if not n_targets or not n_sources:
            return
        if mac_well_separated(tn, sn, cfg.theta):
            interactions.append(
                Interaction(tn, sn, _classify(n_targets, n_sources, cfg.n_threshold))
            )
            return
        if n_targets <= cfg.n_threshold and n_sources <= cfg.n_threshold:
            interactions.append(Interaction(tn, sn, InteractionKind.PP))
            return
        refine_source = n_sources >= n_targets
        node = sn if refine_source else tn
        if not node.split or node.level >= cfg.max_depth:
            interactions.append(Interaction(tn, sn, InteractionKind.PP))
            return
        for child in node.children:
            if refine_source:
                visit(tn, child)
            else:
                visit(child, sn)

    for target_root in target_tree.roots:
        for source_root in source_tree.roots:
            visit(target_root, source_root)
    return interactions


def _sequential_sum(
    particles: Particles, kernel: Kernel, targets: IntArray, sources: IntArray
) -> FloatArray:
    """Raw sum over sources in the given order, one addition at a time."""
    out = np.zeros((len(targets), kernel.dim))
    if not len(targets) or not len(sources):
        return out
    block = max(1, BLOCK_ENTRIES // len(sources))
    q = particles.strengths[sources]
    for start in range(0, len(targets), block):
        rows = targets[start:start + block]
        exclude = rows[:, np.newaxis] == sources[np.newaxis, :] if particles.same_set else None
        values = kernel.pairwise(particles.targets[rows], particles.sources[sources], exclude)
        terms = values * q[np.newaxis, :, np.newaxis]
        out[start:start + block] = np.add.accumulate(terms, axis=1)[:, -1, :]
    return out


def direct_sum(
    positions: FloatArray,
    strengths: FloatArray,
    kernel: Kernel,
    targets: Optional[FloatArray] = None,
) -> FloatArray:
    """Exact O(N^2) convolution, summed over sources in ascending order.

    Without explicit targets the sources are the targets and self pairs are
    skipped. Returns an (n_targets, kernel.dim) field including the prefactor.
    """
    positions = np.asarray(positions, dtype=np.float64)
    if targets is None:
        particles = Particles.self_interacting(positions, strengths)
    else:
        particles = Particles(np.asarray(targets, dtype=np.float64), positions,
                              np.asarray(strengths, dtype=np.float64), same_set=False)
    raw = _sequential_sum(
        particles,
        kernel,
        np.arange(len(particles.targets), dtype=np.int64),
        np.arange(len(positions), dtype=np.int64),
    )
    return raw * kernel.prefactor


def source_proxies(
    sn: TriangleNode, particles: Particles, degree: int
) -> Tuple[FloatArray, FloatArray]:
    """Proxy points of a source node and their equivalent charges."""
    proxies = proxy_points(sn.vertices, degree)
    members = sn.particle_indices
    beta, _ = barycentric_many(sn.vertices, particles.sources[members], sn.inverse)
    moments = source_moments(degree, beta, particles.strengths[members])
    return proxies.points, proxy_charges(degree, moments)[:, 0]


def target_proxies(
    tn: TriangleNode, particles: Particles, degree: int
) -> Tuple[FloatArray, FloatArray]:
    """Proxy points of a target node and the matrix interpolating from them."""
    proxies = proxy_points(tn.vertices, degree)
    beta, _ = barycentric_many(tn.vertices, particles.targets[tn.particle_indices], tn.inverse)
    return proxies.points, interpolation_matrix(degree, beta)


def eval_pp(
    interaction: Interaction, kernel: Kernel, field: FloatArray, particles: Particles
) -> None:
    """Add the direct sum over the source bin to each target in the target bin."""
    targets = interaction.target.particle_indices
    field[targets] += _sequential_sum(particles, kernel, targets, interaction.source.particle_indices)


NodeData = Dict[int, Tuple[FloatArray, FloatArray]]


def _pc(interaction: Interaction, kernel: Kernel, particles: Particles,
        charges: NodeData, matrices: NodeData, degree: int) -> FloatArray:
    source = interaction.source
    proxies, weights = charges.get(source.node_id) or source_proxies(source, particles, degree)
    values = kernel.pairwise(particles.targets[interaction.target.particle_indices], proxies)
    return np.einsum("imd,m->id", values, weights)


def _cp(interaction: Interaction, kernel: Kernel, particles: Particles,
        charges: NodeData, matrices: NodeData, degree: int) -> FloatArray:
    target = interaction.target
    proxies, matrix = matrices.get(target.node_id) or target_proxies(target, particles, degree)
    members = interaction.source.particle_indices
    values = kernel.pairwise(proxies, particles.sources[members])
    return matrix @ np.einsum("mjd,j->md", values, particles.strengths[members])


def _cc(interaction: Interaction, kernel: Kernel, particles: Particles,
        charges: NodeData, matrices: NodeData, degree: int) -> FloatArray:
    source, target = interaction.source, interaction.target
    source_points, weights = charges.get(source.node_id) or source_proxies(
        source, particles, degree
    )
    target_points, matrix = matrices.get(target.node_id) or target_proxies(
        target, particles, degree
    )
    values = kernel.pairwise(target_points, source_points)
    return matrix @ np.einsum("mkd,k->md", values, weights)


_APPROXIMATIONS: Dict[InteractionKind, Callable[..., FloatArray]] = {
    InteractionKind.PC: _pc,
    InteractionKind.CP: _cp,
    InteractionKind.CC: _cc,
}


def eval_pc(interaction: Interaction, kernel: Kernel, field: FloatArray,
            particles: Particles, degree: int) -> None:
    """Add the kernel interpolated at the source proxy points, weighted by proxy charges."""
    field[interaction.target.particle_indices] += _pc(interaction, kernel, particles, {}, {}, degree)


def eval_cp(interaction: Interaction, kernel: Kernel, field: FloatArray,
            particles: Particles, degree: int) -> None:
    """Add the potential computed at target proxy points and interpolated to the targets."""
    field[interaction.target.particle_indices] += _cp(interaction, kernel, particles, {}, {}, degree)


def eval_cc(interaction: Interaction, kernel: Kernel, field: FloatArray,
            particles: Particles, degree: int) -> None:
    """Add the proxy-to-proxy potential interpolated to the targets."""
    field[interaction.target.particle_indices] += _cc(interaction, kernel, particles, {}, {}, degree)


class _NodeCache:
    """Per-node interpolation data, invalidated when the tree is rebinned."""

    def __init__(self) -> None:
        self.key: Tuple[int, int] = (0, -1)
        self.data: NodeData = {}

    def reset(self, tree: IcosaTree) -> None:
        key = (id(tree), tree.epoch)
        if key != self.key:
            self.key = key
            self.data.clear()


class TreeCode:
    """Reusable fast summation engine holding the binning trees and caches."""

    def __init__(self, cfg: TraversalConfig) -> None:
        self.cfg = cfg
        self.source_tree = IcosaTree.geometric(cfg.max_depth)
        self.target_tree = IcosaTree.geometric(cfg.max_depth)
        self._charges = _NodeCache()
        self._matrices = _NodeCache()
        self.stats: Dict[str, float] = {}
        self.totals: Dict[str, float] = {}

    def _map(self, fn: Callable[[T], R], items: Sequence[T]) -> List[R]:
        if self.cfg.workers == 1 or len(items) < 2:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=self.cfg.workers) as pool:
            return list(pool.map(fn, items))

    def sum(
        self,
        positions: FloatArray,
        strengths: FloatArray,
        kernel: Kernel,
        targets: Optional[FloatArray] = None,
    ) -> FloatArray:
        """Approximate the convolution of direct_sum; same shape and prefactor."""
        cfg = self.cfg
        positions = np.asarray(positions, dtype=np.float64)
        strengths = np.asarray(strengths, dtype=np.float64)
        if targets is None:
            particles = Particles.self_interacting(positions, strengths)
        else:
            particles = Particles(np.asarray(targets, dtype=np.float64), positions,
                                  strengths, same_set=False)
        field = np.zeros((len(particles.targets), kernel.dim))
        if not len(particles.targets) or not len(positions):
            return field

        started = time.perf_counter()
        source_tree = bin_particles(self.source_tree, positions, cfg.n_threshold, cfg.max_depth)
        if particles.same_set:
            target_tree = source_tree
        else:
            target_tree = bin_particles(
                self.target_tree, particles.targets, cfg.n_threshold, cfg.max_depth
            )
        binned = time.perf_counter()

        interactions = dual_traversal(target_tree, source_tree, cfg)
        traversed = time.perf_counter()

        self._charges.reset(source_tree)
        self._matrices.reset(target_tree)
        self._evaluate(interactions, target_tree, particles, kernel, field)
        evaluated = time.perf_counter()

        counts = interactions.counts()
        self.stats = {
            **{key: float(value) for key, value in counts.items()},
            "binning_seconds": binned - started,
            "traversal_seconds": traversed - binned,
            "evaluation_seconds": evaluated - traversed,
        }
        for key, value in self.stats.items():
            self.totals[key] = self.totals.get(key, 0.0) + value
        logger.debug("Treecode sum completed", kernel=kernel.name, **counts)
        return field * kernel.prefactor

    def _evaluate(
        self,
        interactions: InteractionList,
        target_tree: IcosaTree,
        particles: Particles,
        kernel: Kernel,
        field: FloatArray,
    ) -> None:
        degree = self.cfg.degree
        charges, matrices = self._charges.data, self._matrices.data

        near: Dict[int, List[IntArray]] = {}
        approximate: List[Interaction] = []
        source_nodes: Dict[int, TriangleNode] = {}
        target_nodes: Dict[int, TriangleNode] = {}
        for interaction in interactions:
            if interaction.kind is InteractionKind.PP:
                near.setdefault(interaction.target.node_id, []).append(
                    interaction.source.particle_indices
                )
                continue
            approximate.append(interaction)
            if interaction.kind in (InteractionKind.PC, InteractionKind.CC):
                source_nodes.setdefault(interaction.source.node_id, interaction.source)
            if interaction.kind in (InteractionKind.CP, InteractionKind.CC):
                target_nodes.setdefault(interaction.target.node_id, interaction.target)

        # Near field: one sequential sum per target leaf over its sorted PP sources,
        # collected from the leaf and all of its ancestors.
        groups: List[Tuple[IntArray, IntArray]] = []
        for leaf in target_tree.binned_leaves():
            chunks: List[IntArray] = []
            node: Optional[TriangleNode] = leaf
            while node is not None:
                chunks.extend(near.get(node.node_id, []))
                node = node.parent
            if chunks:
                groups.append((leaf.particle_indices, np.sort(np.concatenate(chunks))))
        near_results = self._map(
            lambda group: _sequential_sum(particles, kernel, group[0], group[1]), groups
        )
        for (targets, _), value in zip(groups, near_results):
            field[targets] = value

        # Far field: node data first, then contributions reduced in emission order.
        pending_sources = [n for k, n in source_nodes.items() if k not in charges]
        for node, data in zip(pending_sources, self._map(
            lambda n: source_proxies(n, particles, degree), pending_sources
        )):
            charges[node.node_id] = data
        pending_targets = [n for k, n in target_nodes.items() if k not in matrices]
        for node, data in zip(pending_targets, self._map(
            lambda n: target_proxies(n, particles, degree), pending_targets
        )):
            matrices[node.node_id] = data

        def approximation(interaction: Interaction) -> FloatArray:
            return _APPROXIMATIONS[interaction.kind](
                interaction, kernel, particles, charges, matrices, degree
            )

        for interaction, value in zip(approximate, self._map(approximation, approximate)):
            field[interaction.target.particle_indices] += value


def treecode_sum(
    positions: FloatArray,
    strengths: FloatArray,
    kernel: Kernel,
    cfg: TraversalConfig,
    targets: Optional[FloatArray] = None,
) -> FloatArray:
    """One-shot fast summation with a fresh tree."""
    return TreeCode(cfg).sum(positions, strengths, kernel, targets)
