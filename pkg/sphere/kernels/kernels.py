"""Kernels - Green's function, Biot-Savart velocity and helpers on the sphere.

Pairwise evaluators return raw values without the -1/(4 pi) prefactor; the
summation layer applies Kernel.prefactor once at the end.
"""

import math
from dataclasses import dataclass
from typing import Callable, Dict, Optional, Protocol, Tuple

import numpy as np
import structlog
from numpy.typing import NDArray

from sphere.geometry.geometry import FloatArray, xyz_to_latlon

logger = structlog.get_logger()

SINGULARITY_TOL = 1e-14
INV_FOUR_PI = 1.0 / (4.0 * math.pi)

BoolArray = NDArray[np.bool_]
PairwiseFn = Callable[[FloatArray, FloatArray], Tuple[FloatArray, BoolArray]]


class KernelSingularityError(Exception):
    """Custom exception for kernel evaluation at coincident points."""
    pass


class ForcingField(Protocol):
    def __call__(self, lat: FloatArray, lon: FloatArray, t: float) -> FloatArray: ...


@dataclass(frozen=True, slots=True)
class Kernel:
    """A pairwise kernel with output dimension dim."""

    name: str
    dim: int
    pairwise_raw: PairwiseFn
    prefactor: float = 1.0

    def pairwise(
        self, targets: FloatArray, sources: FloatArray, exclude: Optional[BoolArray] = None
    ) -> FloatArray:
        """(n, m, dim) raw values; excluded pairs are exactly zero.

        Raises:
            KernelSingularityError: A pair that is not excluded is singular.
        """
        values, singular = self.pairwise_raw(targets, sources)
        if exclude is not None:
            values[exclude] = 0.0
            singular = singular & ~exclude
        if np.any(singular):
            raise KernelSingularityError(
                f"Kernel '{self.name}' evaluated at {int(singular.sum())} coincident pairs"
            )
        return values


def _dot(x: FloatArray, y: FloatArray) -> FloatArray:
    """Pairwise x . y, written out so every entry rounds the same way."""
    return (
        x[:, np.newaxis, 0] * y[np.newaxis, :, 0]
        + x[:, np.newaxis, 1] * y[np.newaxis, :, 1]
        + x[:, np.newaxis, 2] * y[np.newaxis, :, 2]
    )


def _log_pairwise(x: FloatArray, y: FloatArray) -> Tuple[FloatArray, BoolArray]:
    gap = 1.0 - _dot(x, y)
    singular = gap <= SINGULARITY_TOL
    safe = np.where(singular, 1.0, gap)
    return np.log(safe)[..., np.newaxis], singular


def _half_chord_sq(x: FloatArray, y: FloatArray) -> FloatArray:
    """Pairwise (1/2)|x - y|^2, defined for points off the sphere too."""
    dx = x[:, np.newaxis, 0] - y[np.newaxis, :, 0]
    dy = x[:, np.newaxis, 1] - y[np.newaxis, :, 1]
    dz = x[:, np.newaxis, 2] - y[np.newaxis, :, 2]
    return 0.5 * (dx * dx + dy * dy + dz * dz)


def _log_chord_pairwise(x: FloatArray, y: FloatArray) -> Tuple[FloatArray, BoolArray]:
    half_sq = _half_chord_sq(x, y)
    singular = half_sq <= SINGULARITY_TOL
    return np.log(np.where(singular, 1.0, half_sq))[..., np.newaxis], singular


def _cross_components(x: FloatArray, y: FloatArray) -> Tuple[FloatArray, FloatArray, FloatArray]:
    cx = x[:, np.newaxis, 1] * y[np.newaxis, :, 2] - x[:, np.newaxis, 2] * y[np.newaxis, :, 1]
    cy = x[:, np.newaxis, 2] * y[np.newaxis, :, 0] - x[:, np.newaxis, 0] * y[np.newaxis, :, 2]
    cz = x[:, np.newaxis, 0] * y[np.newaxis, :, 1] - x[:, np.newaxis, 1] * y[np.newaxis, :, 0]
    return cx, cy, cz


def _velocity_pairwise(x: FloatArray, y: FloatArray) -> Tuple[FloatArray, BoolArray]:
    gap = 1.0 - _dot(x, y)
    singular = gap <= SINGULARITY_TOL
    denom = np.where(singular, 1.0, gap)
    cx, cy, cz = _cross_components(x, y)
    return np.stack([cx / denom, cy / denom, cz / denom], axis=-1), singular


def _velocity_chord_pairwise(x: FloatArray, y: FloatArray) -> Tuple[FloatArray, BoolArray]:
    half_sq = _half_chord_sq(x, y)
    singular = half_sq <= SINGULARITY_TOL
    denom = np.where(singular, 1.0, half_sq)
    cx, cy, cz = _cross_components(x, y)
    return np.stack([cx / denom, cy / denom, cz / denom], axis=-1), singular


def _constant_pairwise(x: FloatArray, y: FloatArray) -> Tuple[FloatArray, BoolArray]:
    return np.ones((len(x), len(y), 1)), np.zeros((len(x), len(y)), dtype=bool)


KERNELS: Dict[str, Kernel] = {
    "log": Kernel("log", 1, _log_pairwise, prefactor=-INV_FOUR_PI),
    "log_chord": Kernel("log_chord", 1, _log_chord_pairwise, prefactor=-INV_FOUR_PI),
    "velocity": Kernel("velocity", 3, _velocity_pairwise, prefactor=-INV_FOUR_PI),
    "velocity_chord": Kernel("velocity_chord", 3, _velocity_chord_pairwise, prefactor=-INV_FOUR_PI),
    "constant": Kernel("constant", 1, _constant_pairwise),
}


def get_kernel(name: str) -> Kernel:
    if name not in KERNELS:
        raise KeyError(f"Unknown kernel '{name}'. Available: {', '.join(sorted(KERNELS))}")
    return KERNELS[name]


def greens_log(x: FloatArray, y: FloatArray) -> float:
    """-(1/4 pi) log(1 - x.y), singular at coincident points."""
    value = KERNELS["log"].pairwise(np.atleast_2d(x), np.atleast_2d(y))
    return float(-INV_FOUR_PI * value[0, 0, 0])


def greens_log_chord(x: FloatArray, y: FloatArray) -> float:
    """-(1/4 pi) log(|x - y|^2 / 2); equals greens_log on the sphere."""
    value = KERNELS["log_chord"].pairwise(np.atleast_2d(x), np.atleast_2d(y))
    return float(KERNELS["log_chord"].prefactor * value[0, 0, 0])


def bve_velocity_kernel(x: FloatArray, y: FloatArray) -> FloatArray:
    """(x cross y) / (1 - x.y) without the -1/(4 pi) prefactor."""
    value = KERNELS["velocity"].pairwise(np.atleast_2d(x), np.atleast_2d(y))
    return value[0, 0]


def velocity_kernel_chord(x: FloatArray, y: FloatArray) -> FloatArray:
    value = KERNELS["velocity_chord"].pairwise(np.atleast_2d(x), np.atleast_2d(y))
    return value[0, 0]


def effective_source_strength(
    vorticity: FloatArray,
    areas: FloatArray,
    positions: Optional[FloatArray] = None,
    t: float = 0.0,
    forcing: Optional[ForcingField] = None,
) -> FloatArray:
    """Convolution weights (zeta_j - F_R(y_j, t)) * A_j; zeta_j * A_j unforced."""
    vorticity = np.asarray(vorticity, dtype=np.float64)
    areas = np.asarray(areas, dtype=np.float64)
    if forcing is None:
        return vorticity * areas
    if positions is None:
        raise ValueError("Forcing needs particle positions")
    lat, lon = xyz_to_latlon(positions)
    return (vorticity - forcing(lat, lon, t)) * areas
