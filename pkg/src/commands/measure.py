import argparse

from src.commands.common import emit, load_run_config, read_state
from src.physics.measure import GridLayout
from src.repositories.artifact_repository import ArtifactRepository
from src.schemas.measurement_schema import DataSpec, GridSpec
from src.services.state_service import build_grid, record_data


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("measure", parents=parents, help="Evaluate a quasi-probability of a state on a grid")
    parser.add_argument("--state", required=True, help="State spec or density-matrix JSON")
    parser.add_argument("--function", choices=["husimi", "wigner", "generalized_q"], default="husimi")
    parser.add_argument("--photon-number", type=int, default=0)
    parser.add_argument("--nx", type=int, default=32)
    parser.add_argument("--ny", type=int, default=32)
    parser.add_argument("--extent", type=float, nargs=2, default=(-5.0, 5.0))
    parser.add_argument("--scatter", type=int, help="Use this many random points in a disk instead of a square grid")
    parser.add_argument("--raw", action="store_true", help="Skip unit-max normalization")
    parser.add_argument("--out", required=True, help="Output CSV")
    parser.add_argument("--pgm", help="Optional raster of square-grid data")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    rho = read_state(args.state, config.cutoff)
    if args.scatter:
        grid_spec = GridSpec(layout=GridLayout.SCATTER, points=args.scatter, radius=max(abs(v) for v in args.extent), seed=config.seed or 0)
    else:
        grid_spec = GridSpec(extent=tuple(args.extent), nx=args.nx, ny=args.ny)
    spec = DataSpec(function=args.function, photon_number=args.photon_number, grid=grid_spec, unit_max=not args.raw)

    grid = build_grid(spec.grid)
    data = record_data(rho, spec, grid=grid)
    artifacts = ArtifactRepository()
    artifacts.write_data(args.out, data)
    if args.pgm and grid.layout is GridLayout.SQUARE:
        artifacts.write_pgm(args.pgm, data.as_image(), {"function": args.function})
    emit({"points": len(data), "max_value": data.max_value, "out": args.out})
    return 0
