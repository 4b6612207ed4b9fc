import argparse
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from src.commands import benchmark, classify, generate, measure, noise, reconstruct
from src.commands.common import global_options
from src.core.config import get_settings
from src.core.exceptions import EXIT_CONFIG_ERROR, EXIT_SUCCESS, BaseQSTException
from src.core.logging import configure_logging, get_logger

logger = get_logger(__name__)

COMMANDS = (generate, measure, noise, classify, reconstruct, benchmark)


# =============================================================================
# Application Factory
# =============================================================================

def create_parser() -> argparse.ArgumentParser:
    """
    Create and configure the `qst` command-line parser.

    Returns:
        Parser with the global flags and every command registered
    """
    parser = argparse.ArgumentParser(
        prog="qst",
        description="Continuous-variable quantum state tomography engine",
        parents=[global_options(default=None)],
    )

    register_commands(parser)
    return parser


def register_commands(parser: argparse.ArgumentParser) -> None:
    """Register command handlers; each accepts the global flags too."""
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers, [global_options()])


def run(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse arguments, dispatch to the command handler and map errors to exit codes.

    Engine errors exit with their own code (2 for configuration problems,
    3 for numerical failures); schema validation errors exit with 2.
    """
    parser = create_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)

    try:
        return args.handler(args)
    except BaseQSTException as exc:
        logger.error("%s: %s", exc.code, exc.detail)
        return exc.exit_code
    except ValidationError as exc:
        logger.error("config: %s", exc)
        return EXIT_CONFIG_ERROR
    except Exception:
        if get_settings().DEBUG:
            raise
        logger.exception("Unexpected error")
        return 1


def main() -> None:
    sys.exit(run() or EXIT_SUCCESS)


if __name__ == "__main__":
    main()
