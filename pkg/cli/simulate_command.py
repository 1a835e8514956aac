"""
``simulate``: run one model and its analyses from a YAML config.
"""

from pathlib import Path
from typing import Optional, Tuple

import click

from cli.options import MODEL_KINDS, SEED, echo_manifest, get_experiment_service
from core.logging import get_logger
from core.middleware import command_logging

logger = get_logger(__name__)


@click.command()
@click.argument("model", type=click.Choice(MODEL_KINDS))
@click.option(
    "--config", "config_path", type=click.Path(path_type=Path), default=None,
    help="YAML file with model, analyses and run sections.",
)
@click.option("--seed", type=SEED, default=None, help="Root seed (unsigned 64-bit); overrides [run] seed.")
@click.option("--out", "output_dir", type=click.Path(path_type=Path), default=None,
              help="Output directory; overrides [run] output_dir.")
@click.option("--param", "params", multiple=True, metavar="KEY=VALUE",
              help="Override a [model] key, e.g. --param mu=1.5 (repeatable).")
def simulate(model: str, config_path: Optional[Path], seed: Optional[int], output_dir: Optional[Path], params: Tuple[str, ...]):
    """Simulate MODEL and write its analyses as CSV plus summary.json and manifest.json."""
    with command_logging(f"simulate {model}") as run_id:
        service = get_experiment_service()
        cfg = service.load_config(config_path, model_kind=model, overrides=params, seed=seed, output_dir=output_dir)
        logger.info(f"[{run_id}] writing to {cfg.output_dir}")
        manifest = service.run_experiment(cfg)
        echo_manifest(manifest)
