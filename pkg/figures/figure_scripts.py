"""Figure Scripts - render vorticity maps, scaling, convergence and sweep plots from CSV."""

from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import structlog  # noqa: E402
from scipy.spatial import cKDTree  # noqa: E402

from pipelines.tables import SNAPSHOT_COLUMNS, read_table  # noqa: E402
from sphere.geometry.geometry import FloatArray, latlon_to_xyz  # noqa: E402

logger = structlog.get_logger()

DPI = 150
PROJECTIONS = ("ortho", "equirect")
COLORMAP = "RdBu_r"
# PNG writers add a Software key unless it is cleared.
IMAGE_METADATA = {"Software": None}


class FigureError(Exception):
    """Custom exception for unreadable inputs and unplottable data."""
    pass


@dataclass(frozen=True)
class SnapshotFrame:
    """Particle columns of one snapshot file."""

    particle_id: np.ndarray
    positions: FloatArray
    lat: FloatArray
    lon: FloatArray
    vorticity: FloatArray
    area: FloatArray
    forcing: Optional[FloatArray] = None

    @classmethod
    def from_csv(cls, path: str) -> "SnapshotFrame":
        data = _read(path)
        names = data.dtype.names or ()
        for column in SNAPSHOT_COLUMNS:
            if column not in names:
                raise FigureError(f"Snapshot {path} is missing column '{column}'")
        return cls(
            particle_id=np.asarray(data["particle_id"], dtype=np.int64),
            positions=np.column_stack([data["x"], data["y"], data["z"]]).astype(np.float64),
            lat=np.asarray(data["lat"], dtype=np.float64),
            lon=np.asarray(data["lon"], dtype=np.float64),
            vorticity=np.asarray(data["vorticity"], dtype=np.float64),
            area=np.asarray(data["area"], dtype=np.float64),
            forcing=np.asarray(data["forcing"], dtype=np.float64) if "forcing" in names else None,
        )


def _read(path: str) -> np.ndarray:
    if not Path(path).exists():
        raise FigureError(f"Input file does not exist: {path}")
    try:
        return read_table(Path(path))
    except ValueError as e:
        raise FigureError(f"Could not parse {path}: {e}") from e


def _require(data: np.ndarray, path: str, columns: Tuple[str, ...]) -> None:
    names = data.dtype.names or ()
    for column in columns:
        if column not in names:
            raise FigureError(f"{path} is missing column '{column}'")


def equirect_points(width: int, height: int) -> Tuple[FloatArray, np.ndarray]:
    """Unit vectors at pixel centers of a lon x lat grid; row 0 is the north edge."""
    lon = -np.pi + (np.arange(width) + 0.5) * (2.0 * np.pi / width)
    lat = np.pi / 2.0 - (np.arange(height) + 0.5) * (np.pi / height)
    lon_grid, lat_grid = np.meshgrid(lon, lat)
    points = latlon_to_xyz(lat_grid.reshape(-1), lon_grid.reshape(-1))
    return points, np.ones(width * height, dtype=bool)


def ortho_points(
    size: int, center_lat: float, center_lon: float
) -> Tuple[FloatArray, np.ndarray]:
    """Unit vectors seen at each pixel of an orthographic disk view, and the disk mask."""
    u = -1.0 + (np.arange(size) + 0.5) * (2.0 / size)
    uu, vv = np.meshgrid(u, -u)
    uu, vv = uu.reshape(-1), vv.reshape(-1)
    r2 = uu * uu + vv * vv
    visible = r2 <= 1.0
    w = np.sqrt(np.clip(1.0 - r2, 0.0, None))

    out = latlon_to_xyz(np.asarray(center_lat), np.asarray(center_lon))
    east = np.array([-np.sin(center_lon), np.cos(center_lon), 0.0])
    north = np.cross(out, east)
    points = uu[:, None] * east + vv[:, None] * north + w[:, None] * out
    return points, visible


def render_raster(
    frame: SnapshotFrame,
    projection: str = "ortho",
    resolution: int = 256,
    center: Tuple[float, float] = (np.pi / 4.0, 0.0),
) -> FloatArray:
    """Nearest-particle vorticity raster; pixels off the disk are NaN."""
    if projection == "equirect":
        width, height = 2 * resolution, resolution
        points, visible = equirect_points(width, height)
    elif projection == "ortho":
        width = height = resolution
        points, visible = ortho_points(resolution, *center)
    else:
        raise FigureError(f"Unknown projection '{projection}', expected one of {PROJECTIONS}")

    if not len(frame.vorticity):
        raise FigureError("Snapshot holds no particles")
    _, nearest = cKDTree(frame.positions).query(points)
    raster = np.where(visible, frame.vorticity[nearest], np.nan)
    return raster.reshape(height, width)


def symmetric_limit(values: FloatArray) -> float:
    """Half-width of a color scale centered at zero; 1 for an all-zero field."""
    finite = values[np.isfinite(values)]
    limit = float(np.max(np.abs(finite))) if len(finite) else 0.0
    return limit if limit > 0.0 else 1.0


def _save(fig: plt.Figure, out_image: str) -> None:
    Path(out_image).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_image, dpi=DPI, metadata=IMAGE_METADATA)
    plt.close(fig)


def plot_vorticity_map(
    snapshot: str, projection: str = "ortho", out_image: str = "vorticity.png", resolution: int = 256
) -> FloatArray:
    """Render a snapshot's vorticity with a diverging scale centered at zero.

    Args:
        snapshot: Path to a snapshot CSV.
        projection: "ortho" or "equirect".
        out_image: Output image path.
        resolution: Raster height in pixels.

    Returns:
        np.ndarray: The rendered raster, NaN outside the projected sphere.
    """
    frame = SnapshotFrame.from_csv(snapshot)
    raster = render_raster(frame, projection, resolution)
    limit = symmetric_limit(raster)

    fig, ax = plt.subplots(figsize=(8, 4) if projection == "equirect" else (5, 5))
    extent = (-180.0, 180.0, -90.0, 90.0) if projection == "equirect" else None
    image = ax.imshow(raster, cmap=COLORMAP, vmin=-limit, vmax=limit, extent=extent,
                      interpolation="nearest")
    if projection == "equirect":
        ax.set_xlabel("longitude (deg)")
        ax.set_ylabel("latitude (deg)")
    else:
        ax.set_axis_off()
    fig.colorbar(image, ax=ax, shrink=0.8, label="relative vorticity")
    ax.set_title(Path(snapshot).stem)
    _save(fig, out_image)
    logger.info("✅ Vorticity map rendered", snapshot=snapshot, projection=projection,
                out=out_image)
    return raster


def fit_slope(n: FloatArray, seconds: FloatArray) -> float:
    """Least-squares slope of log(seconds) against log(n)."""
    slope, _ = np.polyfit(np.log(n), np.log(seconds), 1)
    return float(slope)


def plot_scaling(timings_csv: str, out_image: str) -> Dict[str, float]:
    """Log-log runtime against particle count per phase, annotated with fitted slopes.

    Phases with fewer than three positive timings are skipped.

    Returns:
        dict: Fitted slope per plotted phase.
    """
    data = _read(timings_csv)
    _require(data, timings_csv, ("phase", "n_particles", "seconds"))

    phases: List[str] = []
    for phase in np.atleast_1d(data["phase"]).astype(str):
        if phase not in phases:
            phases.append(phase)

    fig, ax = plt.subplots(figsize=(6, 4.5))
    slopes: Dict[str, float] = {}
    for phase in phases:
        rows = data[data["phase"].astype(str) == phase]
        n = rows["n_particles"].astype(np.float64)
        seconds = rows["seconds"].astype(np.float64)
        keep = (n > 0) & (seconds > 0)
        n, seconds = n[keep], seconds[keep]
        if len(np.unique(n)) < 3:
            logger.warning("Skipping phase with fewer than three sizes", phase=phase)
            continue
        order = np.argsort(n)
        slope = fit_slope(n, seconds)
        slopes[phase] = slope
        ax.loglog(n[order], seconds[order], "o-", label=f"{phase} (slope {slope:.2f})")

    if not slopes:
        plt.close(fig)
        raise FigureError(f"{timings_csv} needs at least three sizes per series to fit a slope")

    ax.set_xlabel("particles N")
    ax.set_ylabel("wall time (s)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _save(fig, out_image)
    logger.info("✅ Scaling plot rendered", out=out_image, slopes=slopes)
    return slopes


def plot_error_convergence(errors_csv: str, out_image: str) -> float:
    """Relative l2 error against particle count, log-log; returns the fitted slope."""
    data = _read(errors_csv)
    _require(data, errors_csv, ("n_particles", "rel_l2"))
    n = data["n_particles"].astype(np.float64)
    error = data["rel_l2"].astype(np.float64)
    if len(n) < 2:
        raise FigureError(f"{errors_csv} needs at least two rows for a convergence plot")

    order = np.argsort(n)
    slope = fit_slope(n, error)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(n[order], error[order], "s-", label=f"rel. l2 error (slope {slope:.2f})")
    ax.set_xlabel("particles N")
    ax.set_ylabel("relative l2 error")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
    _save(fig, out_image)
    logger.info("✅ Convergence plot rendered", out=out_image, slope=slope)
    return slope


def plot_degree_sweep(sweep_csv: str, out_image: str) -> None:
    """Error against runtime, one labeled marker per interpolation degree."""
    data = _read(sweep_csv)
    _require(data, sweep_csv, ("degree", "rel_l2", "wall_seconds"))
    if not len(data):
        raise FigureError(f"{sweep_csv} holds no rows")

    order = np.argsort(data["degree"])
    seconds = data["wall_seconds"][order].astype(np.float64)
    error = data["rel_l2"][order].astype(np.float64)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.loglog(seconds, error, "o-")
    for degree, x, y in zip(data["degree"][order], seconds, error):
        ax.annotate(f"d={int(degree)}", (x, y), textcoords="offset points", xytext=(4, 4))
    ax.set_xlabel("wall time (s)")
    ax.set_ylabel("relative l2 error")
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, out_image)
    logger.info("✅ Degree sweep plot rendered", out=out_image)
