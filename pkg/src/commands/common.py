"""
Helpers shared by the command handlers: config loading, global overrides and state files.
"""
import argparse
import json
from pathlib import Path
from typing import Optional

from src.core.exceptions import ConfigException
from src.physics.fock import DensityMatrix, validate_density_matrix
from src.repositories.artifact_repository import ArtifactRepository
from src.schemas.config_schema import RunConfig
from src.schemas.state_schema import DensityMatrixPayload, state_spec_adapter
from src.services.state_service import build_state


def global_options(default=argparse.SUPPRESS) -> argparse.ArgumentParser:
    """
    Flags accepted before or after any command.

    Command parsers use the suppressed default so a flag given ahead of the
    command is not reset when the command's own parser runs.
    """
    options = argparse.ArgumentParser(add_help=False)
    options.add_argument("--seed", type=int, default=default, help="Global random seed")
    options.add_argument("--cutoff", type=int, default=default, help="Fock-space cutoff")
    options.add_argument("--config", default=default, help="JSON run config")
    options.add_argument("--log-level", default=default, help="Overrides LOG_LEVEL")
    return options


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """
    The ``--config`` document (or an empty one) with ``--seed`` and ``--cutoff`` applied.

    Raises:
        ConfigException: If the file is missing or not JSON
        pydantic.ValidationError: If the document does not match the schema
    """
    document: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise ConfigException(f"config file {path} does not exist")
        try:
            document = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigException(f"config file {path} is not valid JSON: {exc}") from exc
    config = RunConfig.model_validate(document)
    updates = {}
    if getattr(args, "seed", None) is not None:
        updates["seed"] = args.seed
    if getattr(args, "cutoff", None) is not None:
        updates["cutoff"] = args.cutoff
    return config.model_copy(update=updates) if updates else config


def section_overrides(config: RunConfig, has_seed: bool = True, has_cutoff: bool = True) -> dict:
    """Global seed and cutoff as field updates for a config section."""
    updates = {}
    if has_seed and config.seed is not None:
        updates["seed"] = config.seed
    if has_cutoff and config.cutoff is not None:
        updates["cutoff"] = config.cutoff
    return updates


def read_state(path: str, cutoff: Optional[int] = None) -> DensityMatrix:
    """
    A state file: either a state spec (``{"family": ...}``) or a density-matrix payload.
    """
    document = ArtifactRepository().read_json(path)
    if not isinstance(document, dict):
        raise ConfigException(f"{path} must hold a JSON object")
    if "family" in document:
        if cutoff is not None:
            document = {**document, "cutoff": cutoff}
        return build_state(state_spec_adapter.validate_python(document))
    payload = DensityMatrixPayload.model_validate(document)
    return validate_density_matrix(payload.to_array(), path)


def emit(document) -> None:
    """Print a JSON result on stdout."""
    if hasattr(document, "model_dump"):
        document = document.model_dump(mode="json")
    print(json.dumps(document, sort_keys=True, indent=2))
