"""
``reproduce``: regenerate the data behind the two growth-rate figures.
"""

from pathlib import Path
from typing import Optional

import click

from cli.options import SEED, echo_manifest, get_experiment_service
from core.middleware import command_logging


@click.command()
@click.argument("figure", type=click.Choice(["fig1-left", "fig1-right"]))
@click.option("--out", "output_dir", type=click.Path(path_type=Path), required=True, help="Output directory.")
@click.option("--seed", type=SEED, default=0, show_default=True, help="Root seed (unsigned 64-bit).")
@click.option("--firms", type=click.IntRange(min=1), default=None,
              help="Firms to simulate (WB firms or GPG seed firms); default 100000.")
def reproduce(figure: str, output_dir: Path, seed: int, firms: Optional[int]):
    """
    fig1-left: WB(alpha=1.2, mu=1.4) density, size-volatility and tails.
    fig1-right: GPG(b=0) density and unit-count histogram.
    """
    with command_logging(f"reproduce {figure}"):
        manifest = get_experiment_service().reproduce(figure, output_dir, seed=seed, firms=firms)
        echo_manifest(manifest)
