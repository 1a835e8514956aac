"""
Entry point for the granular-growth toolkit.
Builds the click command group and maps toolkit errors to exit codes.
"""

import sys
from typing import List, Optional, Sequence

import click

# Core imports
from core.config import get_settings, validate_required_settings
from core.exceptions import EXIT_OK, EXIT_PARAMETER_ERROR, GrowthToolkitException
from core.logging import get_logger, setup_logging
from core.workers import worker_pool

# Commands
from cli.oracle_command import oracle
from cli.reproduce_command import reproduce
from cli.selftest_command import selftest
from cli.simulate_command import simulate

# Initialize logger
logger = get_logger(__name__)


def create_cli() -> click.Group:
    """Create the command group with every subcommand attached."""
    settings = get_settings()

    @click.group(name=settings.app_name)
    @click.version_option(settings.app_version, prog_name=settings.app_name)
    def main():
        """Monte Carlo simulation and statistical checks for compositional firm-growth models."""

    main.add_command(simulate)
    main.add_command(reproduce)
    main.add_command(oracle)
    main.add_command(selftest)
    return main


def cli_main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run the CLI and return its exit code.

    0 on success, 1 for parameter and usage errors, 2 for I/O errors.
    """
    args: Optional[List[str]] = list(argv) if argv is not None else None
    try:
        setup_logging()
        validate_required_settings(get_settings())
        rv = create_cli().main(args=args, prog_name=get_settings().app_name, standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        return EXIT_PARAMETER_ERROR
    except click.Abort:
        click.echo("Aborted!", err=True)
        return EXIT_PARAMETER_ERROR
    except GrowthToolkitException as exc:
        logger.debug(f"{exc.error_code} details: {exc.details}")
        click.echo(f"Error [{exc.error_code}]: {exc.message}", err=True)
        return exc.exit_code
    finally:
        worker_pool.close()
    return EXIT_OK if rv is None else int(rv)


if __name__ == "__main__":
    sys.exit(cli_main())
