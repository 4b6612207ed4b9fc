import argparse

from pydantic import TypeAdapter

from src.commands.common import emit, load_run_config, read_state
from src.core.exceptions import ConfigException
from src.physics.measure import DataVector, Normalization, make_square_grid
from src.repositories.artifact_repository import ArtifactRepository
from src.schemas.noise_schema import NoiseSpec
from src.schemas.state_schema import DensityMatrixPayload
from src.services.state_service import apply_data_noise, apply_state_noise

noise_list_adapter: TypeAdapter = TypeAdapter(list[NoiseSpec])


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("noise", parents=parents, help="Apply noise channels to a state or a data file")
    parser.add_argument("--input", required=True, help="State JSON or data CSV")
    parser.add_argument("--noise", required=True, help="JSON list of noise specs")
    parser.add_argument("--nx", type=int, help="Square-grid width of CSV input (needed by image channels)")
    parser.add_argument("--ny", type=int)
    parser.add_argument("--extent", type=float, nargs=2, default=(-5.0, 5.0))
    parser.add_argument("--out", required=True)
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    artifacts = ArtifactRepository()
    specs = noise_list_adapter.validate_python(artifacts.read_json(args.noise))

    if args.input.endswith(".csv"):
        grid = None
        if args.nx:
            grid = make_square_grid(tuple(args.extent), args.nx, args.ny or args.nx)
        data: DataVector = artifacts.read_data(args.input, grid=grid)
        if any(spec.acts_on_state for spec in specs):
            raise ConfigException("state channels (mix_random, photon_loss) cannot act on data files")
        result = apply_data_noise(data, specs)
        artifacts.write_data(args.out, result)
        emit({"points": len(result), "normalization": Normalization(result.normalization).value, "out": args.out})
        return 0

    rho = read_state(args.input, config.cutoff)
    if not all(spec.acts_on_state for spec in specs):
        raise ConfigException("data channels cannot act on a state; measure it first")
    rho = apply_state_noise(rho, specs)
    artifacts.write_json(args.out, DensityMatrixPayload.from_array(rho))
    emit({"dim": int(rho.shape[0]), "out": args.out})
    return 0
