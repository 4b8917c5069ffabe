"""CSV tables - headed, comma separated outputs with full-precision floats."""

from pathlib import Path
from typing import Dict, Mapping, Sequence, Union

import numpy as np
import structlog

from sphere.geometry.geometry import FloatArray
from sphere.icosa_mesh.icosa_mesh import IcosaMesh

logger = structlog.get_logger()

FLOAT_FORMAT = "%.17g"
Column = Union[np.ndarray, Sequence[object]]

SNAPSHOT_COLUMNS = ("particle_id", "x", "y", "z", "lat", "lon", "vorticity", "area")
RUN_LOG_COLUMNS = (
    "step",
    "time",
    "n_particles",
    "total_vorticity",
    "absolute_vorticity_drift",
    "wall_seconds",
)
ERROR_COLUMNS = ("n_particles", "theta", "degree", "rel_l2", "rel_linf", "wall_seconds")
TIMING_COLUMNS = ("phase", "n_particles", "seconds")
INTERACTION_COLUMNS = ("n_particles", "pp", "pc", "cp", "cc")
MESH_COLUMNS = ("id", "x", "y", "z", "area")


def _column_format(values: np.ndarray) -> str:
    if values.dtype.kind in "iub":
        return "%d"
    if values.dtype.kind == "f":
        return FLOAT_FORMAT
    return "%s"


def write_table(path: Path, columns: Mapping[str, Column]) -> Path:
    """Write equal-length columns under a header line, in mapping order.

    Integer columns are written as integers and float columns with 17
    significant digits.
    """
    arrays = {name: np.asarray(values) for name, values in columns.items()}
    lengths = {len(values) for values in arrays.values()}
    if len(lengths) > 1:
        raise ValueError(f"Columns have different lengths: {sorted(lengths)}")
    n_rows = lengths.pop() if lengths else 0

    table = np.empty((n_rows, len(arrays)), dtype=object)
    for j, values in enumerate(arrays.values()):
        table[:, j] = values
    formats = [_column_format(values) for values in arrays.values()]

    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, table, fmt=formats, delimiter=",", header=",".join(arrays), comments="")
    return path


def read_table(path: Path) -> np.ndarray:
    """Structured array with one field per header column."""
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    return np.atleast_1d(data)


def rows_to_columns(rows: Sequence[Mapping[str, object]], names: Sequence[str]) -> Dict[str, list]:
    return {name: [row[name] for row in rows] for name in names}


def export_mesh_csv(mesh: IcosaMesh, areas: FloatArray, path: Path) -> Path:
    """Vertex table with node patch areas: id, x, y, z, area."""
    vertices = mesh.vertices
    if len(areas) != len(vertices):
        raise ValueError(f"Expected {len(vertices)} areas, got {len(areas)}")
    written = write_table(
        Path(path),
        {
            "id": np.arange(len(vertices), dtype=np.int64),
            "x": vertices[:, 0],
            "y": vertices[:, 1],
            "z": vertices[:, 2],
            "area": np.asarray(areas, dtype=np.float64),
        },
    )
    logger.info("Mesh exported", path=str(written), n_vertices=len(vertices))
    return written
