import argparse

from src.commands.common import emit, load_run_config
from src.repositories.artifact_repository import ArtifactRepository
from src.schemas.config_schema import BenchmarkConfig
from src.services.benchmark_service import SCENARIOS, BenchmarkService


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("benchmark", parents=parents, help="Run a reconstruction benchmark scenario")
    parser.add_argument("--scenario", choices=SCENARIOS, help="Overrides the config")
    parser.add_argument("--seeds", type=int, nargs="+")
    parser.add_argument("--max-iters", type=int)
    parser.add_argument("--out", required=True, help="Report directory")
    parser.add_argument("--database-url", help="Fit-run registry; defaults to DATABASE_URL")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    updates: dict = {}
    if args.scenario:
        updates["scenario"] = args.scenario
    if args.seeds:
        updates["seeds"] = args.seeds
    if args.max_iters:
        updates["max_iters"] = args.max_iters
    if config.cutoff is not None:
        updates["cutoff"] = config.cutoff
    base = config.benchmark or BenchmarkConfig()
    benchmark = BenchmarkConfig.model_validate({**base.model_dump(), **updates})

    summary = BenchmarkService(ArtifactRepository(), args.database_url).run_benchmark(benchmark, args.out)
    emit({
        "scenario": summary.scenario,
        "methods": [
            {"method": m.method, "case": m.case, "final_mean": m.final_mean, "final_std": m.final_std}
            for m in summary.methods
        ],
        "out": args.out,
    })
    return 0
