import argparse

from src.commands.common import emit, load_run_config, section_overrides
from src.repositories.artifact_repository import ArtifactRepository
from src.schemas.config_schema import DatasetConfig
from src.services.dataset_service import DatasetService


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("generate", parents=parents, help="Generate a labeled dataset of phase-space data")
    parser.add_argument("--out", required=True, help="Output directory for CSV files and manifest.json")
    parser.add_argument("--classes", nargs="+", help="State families for a random recipe")
    parser.add_argument("--per-class", type=int, help="Samples per class")
    parser.set_defaults(handler=handle)


def handle(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    dataset = config.dataset or DatasetConfig(classes=args.classes or ["fock", "coherent", "thermal", "num", "binomial", "cat", "gkp"])
    updates = section_overrides(config)
    if args.classes:
        updates["classes"] = args.classes
    if args.per_class is not None:
        updates["per_class"] = args.per_class
    dataset = DatasetConfig.model_validate({**dataset.model_dump(), **updates})

    manifest = DatasetService(ArtifactRepository()).generate_dataset(dataset, args.out)
    emit({"entries": len(manifest.entries), "class_counts": manifest.class_counts(), "out": args.out})
    return 0
