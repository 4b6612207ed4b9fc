import argparse

from src.commands.common import emit, load_run_config, read_state
from src.core.exceptions import ConfigException
from src.physics.measure import MeasurementKind, make_square_grid, normalize_unit_max
from src.repositories.artifact_repository import ArtifactRepository
from src.schemas.config_schema import LossKind, ReconstructionConfig, ReconstructionMethod
from src.schemas.measurement_schema import MeasurementSpec
from src.services.reconstruction_service import ReconstructionProblem, ReconstructionService
from src.services.state_service import build_measurements, measurements_on


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("reconstruct", parents=parents, help="Reconstruct a density matrix from a data file")
    parser.add_argument("--data", required=True, help="Data CSV")
    parser.add_argument("--method", help="imle, cgan, cholesky or cholesky:<L1|L2|CE|KL>; overrides the config")
    parser.add_argument("--ops", help="Measurement spec JSON; defaults to --kind on the data file's points")
    parser.add_argument("--kind", choices=[k.value for k in MeasurementKind], default=MeasurementKind.HUSIMI_PROJECTOR.value)
    parser.add_argument("--photon-number", type=int, default=0)
    parser.add_argument("--nx", type=int, help="Read the data as a square grid of this width")
    parser.add_argument("--ny", type=int)
    parser.add_argument("--extent", type=float, nargs=2, default=(-5.0, 5.0))
    parser.add_argument("--lambda-l1", type=float, help="QST-CGAN L1 weight")
    parser.add_argument("--true-state", help="Reference state JSON; enables fidelity traces")
    parser.add_argument("--max-iters", type=int)
    parser.add_argument("--out", required=True, help="Reconstructed density matrix JSON")
    parser.add_argument("--report", help="FitReport JSON with full traces")
    parser.set_defaults(handler=handle)


def parse_method(value: str) -> tuple[ReconstructionMethod, LossKind | None]:
    name, _, loss = value.partition(":")
    try:
        method = ReconstructionMethod(name)
        return method, LossKind(loss) if loss else None
    except ValueError as exc:
        raise ConfigException(f"unknown method '{value}'") from exc


def handle(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    artifacts = ArtifactRepository()
    ops_document = artifacts.read_json(args.ops) if args.ops else None
    if ops_document is not None and not isinstance(ops_document, dict):
        raise ConfigException(f"{args.ops} must hold a JSON object")
    # --cutoff and the config win over the cutoff an ops file declares
    cutoff = config.cutoff if config.cutoff is not None else (ops_document or {}).get("cutoff")
    if cutoff is None:
        raise ConfigException("reconstruction needs a cutoff (--cutoff, 'cutoff' in the config or in the ops file)")
    recon = config.reconstruction or ReconstructionConfig()
    method, loss = parse_method(args.method) if args.method else (recon.method, None)

    grid = make_square_grid(tuple(args.extent), args.nx, args.ny or args.nx) if args.nx else None
    data = normalize_unit_max(artifacts.read_data(args.data, grid=grid))
    if ops_document is not None:
        ops = build_measurements(MeasurementSpec.model_validate({**ops_document, "cutoff": cutoff}))
    else:
        ops = measurements_on(data.grid, MeasurementKind(args.kind), cutoff, args.photon_number)
    true_state = read_state(args.true_state, cutoff) if args.true_state else None
    problem = ReconstructionProblem(data=data, ops=ops, known_noise=recon.known_noise, true_state=true_state)

    section = {
        ReconstructionMethod.IMLE: recon.imle,
        ReconstructionMethod.CHOLESKY: recon.cholesky,
        ReconstructionMethod.CGAN: recon.cgan,
    }[method]
    updates: dict = {}
    if args.max_iters:
        updates["control"] = section.control.model_copy(update={"max_iters": args.max_iters})
    if config.seed is not None and "seed" in type(section).model_fields:
        updates["seed"] = config.seed
    if loss is not None:
        updates["loss"] = loss
    if args.lambda_l1 is not None and method is ReconstructionMethod.CGAN:
        updates["lambda_l1"] = args.lambda_l1
    section = type(section).model_validate({**section.model_dump(), **updates})

    report = ReconstructionService().fit(method.value, problem, section)
    artifacts.write_json(args.out, report.final_state)
    if args.report:
        artifacts.write_json(args.report, report)
    emit({
        "method": report.method,
        "iterations": report.iterations,
        "stop_reason": report.stop_reason,
        "final_fidelity": report.final_fidelity,
        "flags": report.flags,
        "out": args.out,
    })
    return 0
