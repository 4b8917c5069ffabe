"""vortflow command line - run simulations, benchmarks and figure scripts."""

import argparse
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence

import structlog
from dotenv import load_dotenv

from pipelines.bench import bench_convolution, degree_sweep
from pipelines.config import MAX_MESH_LEVEL, ConfigError, load_config
from pipelines.simulation import configure_logging, run_simulation
from pipelines.tables import export_mesh_csv
from sphere.icosa_mesh.icosa_mesh import build_mesh, node_patch_areas

logger = structlog.get_logger()

VERSION = "0.1.0"


def _int_list(text: str, prefix: str) -> List[int]:
    """Parse 'prefix=4,5,6' or '4,5,6' into integers."""
    if text.startswith(prefix + "="):
        text = text[len(prefix) + 1:]
    try:
        values = [int(item) for item in text.split(",") if item.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got '{text}'")
    if not values:
        raise argparse.ArgumentTypeError(f"expected at least one value for {prefix}")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vortflow",
        description="Lagrangian barotropic vorticity solver with treecode fast summation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {VERSION}")
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a simulation from a config file")
    run.add_argument("config", help="key=value or YAML config file")
    run.add_argument("--set", dest="overrides", action="append", default=[],
                     metavar="KEY=VALUE", help="Override one config key (repeatable)")
    run.add_argument("--compare-direct", action="store_true",
                     help="Also run with direct summation and report errors against it")
    run.add_argument("--bench", type=lambda s: _int_list(s, "sizes"), metavar="sizes=L1,L2,...",
                     help="Benchmark one convolution per mesh level instead of time stepping")
    run.add_argument("--sweep", type=lambda s: _int_list(s, "degrees"), metavar="degrees=D1,D2,...",
                     help="Sweep interpolation degrees at the configured mesh level")
    run.add_argument("--output-dir", help="Directory for all output files")

    plot_map = commands.add_parser("plot-map", help="Render a snapshot vorticity map")
    plot_map.add_argument("snapshot")
    plot_map.add_argument("--projection", choices=("ortho", "equirect"), default="ortho")
    plot_map.add_argument("--out", required=True)
    plot_map.add_argument("--resolution", type=int, default=256)

    for name, help_text, source in (
        ("plot-scaling", "Plot runtime scaling from timings.csv", "timings"),
        ("plot-convergence", "Plot error convergence from errors.csv", "errors"),
        ("plot-sweep", "Plot error against runtime from sweep.csv", "sweep"),
    ):
        sub = commands.add_parser(name, help=help_text)
        sub.add_argument(source)
        sub.add_argument("--out", required=True)

    export = commands.add_parser("export-mesh", help="Write the vertices and areas of a mesh level")
    export.add_argument("level", type=int)
    export.add_argument("--out", required=True)
    return parser


def _export_mesh(args: argparse.Namespace) -> int:
    if not 0 <= args.level <= MAX_MESH_LEVEL:
        raise ConfigError(f"mesh level must be in [0, {MAX_MESH_LEVEL}], got {args.level}")
    mesh = build_mesh(args.level)
    path = export_mesh_csv(mesh, node_patch_areas(mesh), Path(args.out))
    print(f"📁 Mesh: {path} ({len(mesh.vertices)} vertices)")
    return 0


def _run(args: argparse.Namespace) -> int:
    overrides = list(args.overrides)
    if args.output_dir:
        overrides.append(f"output_dir={args.output_dir}")
    config = load_config(args.config, overrides)

    if args.bench:
        rows = bench_convolution(config, args.bench, config.output_dir)
        for row in rows:
            print(f"N={row.n_particles:>8d}  direct={row.direct_seconds:.4f}s  "
                  f"fast={row.fast_seconds:.4f}s  speedup={row.speedup:.2f}  E={row.rel_l2:.3e}")
        return 0
    if args.sweep:
        for row in degree_sweep(config, args.sweep, output_dir=config.output_dir):
            print(f"d={row.degree:>2d}  E={row.rel_l2:.3e}  time={row.wall_seconds:.4f}s")
        return 0

    state = run_simulation(config, compare_direct=args.compare_direct)
    report = state.get("error_report")
    print(f"📁 Output: {Path(config.output_dir).resolve()}")
    print(f"🧮 Particles: {state['field'].n_particles}  Steps: {state['step']}")
    if report is not None:
        print(f"📉 rel_l2={report.rel_l2:.6e}  rel_linf={report.rel_linf:.6e} ({report.label})")
    return 0


def _plot(args: argparse.Namespace) -> int:
    from figures.figure_scripts import (
        plot_degree_sweep,
        plot_error_convergence,
        plot_scaling,
        plot_vorticity_map,
    )

    if args.command == "plot-map":
        plot_vorticity_map(args.snapshot, args.projection, args.out, args.resolution)
    elif args.command == "plot-scaling":
        for phase, slope in plot_scaling(args.timings, args.out).items():
            print(f"{phase}: slope {slope:.3f}")
    elif args.command == "plot-convergence":
        print(f"slope {plot_error_convergence(args.errors, args.out):.3f}")
    else:
        plot_degree_sweep(args.sweep, args.out)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main entry point; returns the process exit status."""
    load_dotenv(".env", override=True)
    configure_logging(os.getenv("VORTFLOW_LOG_LEVEL", "INFO"))
    args = build_parser().parse_args(argv)
    logger.info("vortflow starting", version=VERSION, command=args.command)

    try:
        if args.command == "run":
            return _run(args)
        if args.command == "export-mesh":
            return _export_mesh(args)
        return _plot(args)
    except ConfigError as e:
        logger.error("Invalid configuration", error=str(e))
        print(f"\n❌ Invalid configuration: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.error("vortflow failed", command=args.command, error=str(e))
        print(f"\n❌ {args.command} failed: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
