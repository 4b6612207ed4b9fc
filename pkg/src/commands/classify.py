import argparse
from pathlib import Path

import numpy as np

from src.commands.common import emit, load_run_config, section_overrides
from src.core.exceptions import UnknownKindException
from src.physics.measure import normalize_unit_max
from src.repositories.artifact_repository import ArtifactRepository
from src.schemas.config_schema import ClassifierConfig
from src.services.classifier_service import (
    ClassifierService,
    evaluate,
    grad_cam,
    predict,
    samples_from_data,
)
from src.services.dataset_service import DatasetService
from src.services.state_service import build_grid


def register(subparsers: argparse._SubParsersAction, parents: list[argparse.ArgumentParser]) -> None:
    parser = subparsers.add_parser("classify", parents=parents, help="Train, evaluate and inspect the state classifier")
    actions = parser.add_subparsers(dest="action", required=True)

    train = actions.add_parser("train", parents=parents, help="Generate data and train a classifier")
    train.add_argument("--out", required=True, help="Checkpoint path")
    train.add_argument("--metrics", help="Write training history and held-out metrics as JSON")
    train.set_defaults(handler=handle_train)

    evaluate_parser = actions.add_parser("eval", parents=parents, help="Evaluate a checkpoint on a dataset manifest")
    evaluate_parser.add_argument("--model", required=True)
    evaluate_parser.add_argument("--data", required=True, help="manifest.json of a generated dataset")
    evaluate_parser.add_argument("--out", help="Metrics JSON")
    evaluate_parser.add_argument("--confusion", help="Confusion matrix CSV")
    evaluate_parser.set_defaults(handler=handle_eval)

    predict_parser = actions.add_parser("predict", parents=parents, help="Class probabilities of one data file")
    predict_parser.add_argument("--model", required=True)
    predict_parser.add_argument("--input", required=True)
    predict_parser.set_defaults(handler=handle_predict)

    gradcam = actions.add_parser("gradcam", parents=parents, help="Grad-CAM heatmap of one data file")
    gradcam.add_argument("--model", required=True)
    gradcam.add_argument("--input", required=True, help="Data CSV on the model's grid")
    gradcam.add_argument("--class", dest="target", required=True, help="Target class name")
    gradcam.add_argument("--out", required=True, help="Heatmap PGM")
    gradcam.set_defaults(handler=handle_gradcam)


def handle_train(args: argparse.Namespace) -> int:
    config = load_run_config(args)
    classifier = config.classifier or ClassifierConfig()
    classifier = classifier.model_copy(update=section_overrides(config))
    service = ClassifierService(ClassifierConfig.model_validate(classifier.model_dump()))

    train, test = service.datasets()
    graph, history = service.train(train)
    service.save(args.out, graph)
    result = {"history": history.model_dump(), "checkpoint": args.out}
    if test:
        report = evaluate(graph, test, service.config.classes)
        result["evaluation"] = report.model_dump()
    if args.metrics:
        ArtifactRepository().write_json(args.metrics, result)
    emit(result)
    return 0


def _load_image(service: ClassifierService, path: str) -> np.ndarray:
    grid = build_grid(service.config.grid)
    data = ArtifactRepository().read_data(path, grid=grid)
    return normalize_unit_max(data).as_image()


def handle_eval(args: argparse.Namespace) -> int:
    service, graph = ClassifierService.load(args.model)
    manifest, vectors = DatasetService(ArtifactRepository()).load_samples(args.data)
    samples = samples_from_data(vectors, [entry.label for entry in manifest.entries], service.config.classes)
    report = evaluate(graph, samples, service.config.classes)

    artifacts = ArtifactRepository()
    if args.out:
        artifacts.write_json(args.out, report)
    if args.confusion:
        artifacts.write_matrix(args.confusion, np.asarray(report.confusion))
    emit(report)
    return 0


def handle_predict(args: argparse.Namespace) -> int:
    service, graph = ClassifierService.load(args.model)
    probabilities = predict(graph, _load_image(service, args.input))
    classes = service.config.classes
    emit({"label": classes[int(np.argmax(probabilities))], "probabilities": dict(zip(classes, probabilities.tolist()))})
    return 0


def handle_gradcam(args: argparse.Namespace) -> int:
    service, graph = ClassifierService.load(args.model)
    if args.target not in service.config.classes:
        raise UnknownKindException("class", args.target)
    image = _load_image(service, args.input)
    result = grad_cam(graph, image, service.config.classes.index(args.target))
    ArtifactRepository().write_pgm(args.out, result.heatmap, {"class": args.target, "flags": result.flags})
    emit({"out": str(Path(args.out)), "flags": result.flags})
    return 0
