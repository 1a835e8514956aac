"""
Shared click parameter types and service factories.
"""

import click

from models.randkit_model import UINT64_MAX
from services.experiment_service import ExperimentService
from services.oracle_service import OracleService
from services.randkit_service import RandkitService

SEED = click.IntRange(0, UINT64_MAX)

MODEL_KINDS = ("wb", "simon", "gpg", "psi", "sutton", "fas", "opportunities")


def get_experiment_service() -> ExperimentService:
    """Experiment service instance for one command."""
    return ExperimentService()


def get_oracle_service() -> OracleService:
    """Oracle service instance for one command."""
    return OracleService()


def get_randkit_service() -> RandkitService:
    """Sampler service instance for one command."""
    return RandkitService()


def echo_manifest(manifest) -> None:
    """Print the files written by a run, one per line."""
    for output in manifest.outputs:
        click.echo(f"{output.file}\t{output.sha256}")
    click.echo("manifest.json")
