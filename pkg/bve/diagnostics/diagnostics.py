"""Diagnostics - relative error metrics and conservation checks."""

from dataclasses import asdict, dataclass
from typing import Any, Dict, Protocol

import numpy as np
import structlog

from bve.test_cases.test_cases import OMEGA
from sphere.geometry.geometry import FloatArray

logger = structlog.get_logger()


class UndefinedErrorMetric(Exception):
    """Raised when a relative metric has an all-zero reference field."""
    pass


class VorticityState(Protocol):
    positions: FloatArray
    vorticity: FloatArray
    areas: FloatArray
    initial_absolute_vorticity: FloatArray


@dataclass(frozen=True, slots=True)
class ErrorReport:
    rel_l2: float
    rel_linf: float
    n_particles: int
    label: str = ""

    def __post_init__(self) -> None:
        if self.rel_l2 < 0.0 or self.rel_linf < 0.0:
            raise ValueError("Error metrics must be non-negative")

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _as_rows(values: FloatArray) -> FloatArray:
    values = np.asarray(values, dtype=np.float64)
    return values[:, np.newaxis] if values.ndim == 1 else values


def _check_lengths(a: FloatArray, b: FloatArray, areas: FloatArray) -> None:
    if not len(a) == len(b) == len(areas):
        raise ValueError(
            f"Length mismatch: field {len(a)}, reference {len(b)}, areas {len(areas)}"
        )


def rel_l2_error(field: FloatArray, reference: FloatArray, areas: FloatArray) -> float:
    """sqrt(sum |f - r|^2 A / sum |r|^2 A) for scalar or vector rows."""
    f, r = _as_rows(field), _as_rows(reference)
    areas = np.asarray(areas, dtype=np.float64)
    _check_lengths(f, r, areas)
    denominator = float(np.sum(np.sum(r * r, axis=1) * areas))
    if denominator <= 0.0:
        raise UndefinedErrorMetric("Reference field is zero; relative error is undefined")
    diff = f - r
    return float(np.sqrt(np.sum(np.sum(diff * diff, axis=1) * areas) / denominator))


def rel_linf_error(field: FloatArray, reference: FloatArray) -> float:
    """max |f - r| / max |r| over particles, using vector norms for rows."""
    f, r = _as_rows(field), _as_rows(reference)
    if len(f) != len(r):
        raise ValueError(f"Length mismatch: field {len(f)}, reference {len(r)}")
    scale = float(np.max(np.linalg.norm(r, axis=1))) if len(r) else 0.0
    if scale <= 0.0:
        raise UndefinedErrorMetric("Reference field is zero; relative error is undefined")
    return float(np.max(np.linalg.norm(f - r, axis=1)) / scale)


def rel_l2_velocity_error(v_fast: FloatArray, v_direct: FloatArray, areas: FloatArray) -> float:
    return rel_l2_error(v_fast, v_direct, areas)


def rel_l2_vorticity_error(zeta: FloatArray, zeta_ref: FloatArray, areas: FloatArray) -> float:
    return rel_l2_error(zeta, zeta_ref, areas)


def error_report(
    field: FloatArray, reference: FloatArray, areas: FloatArray, label: str = ""
) -> ErrorReport:
    return ErrorReport(
        rel_l2=rel_l2_error(field, reference, areas),
        rel_linf=rel_linf_error(field, reference),
        n_particles=len(areas),
        label=label,
    )


def total_vorticity(state: VorticityState) -> float:
    return float(np.sum(state.vorticity * state.areas))


def absolute_vorticity(state: VorticityState) -> FloatArray:
    return state.vorticity + 2.0 * OMEGA * state.positions[:, 2]


def absolute_vorticity_drift(state: VorticityState) -> float:
    """Largest change of zeta + 2 Omega z relative to the largest initial value."""
    initial = state.initial_absolute_vorticity
    scale = float(np.max(np.abs(initial))) if len(initial) else 0.0
    if scale == 0.0:
        return 0.0
    return float(np.max(np.abs(absolute_vorticity(state) - initial)) / scale)
