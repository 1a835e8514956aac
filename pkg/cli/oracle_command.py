"""
``oracle``: analytic references printed as CSV on stdout.
"""

from typing import Optional

import click
import numpy as np
import pandas as pd

from cli.options import get_oracle_service, get_randkit_service
from core.middleware import command_logging
from models.oracle_model import MixtureSpec
from services.base import build_model


def _echo_frame(frame: pd.DataFrame) -> None:
    click.echo(frame.to_csv(index=False, float_format="%.17g", lineterminator="\n"), nl=False)


@click.group()
def oracle():
    """Reference densities, partition counts and predicted exponents."""


@oracle.command()
@click.option("--psi", type=float, required=True, help="Exponent of K in the variance sigma^2 K^psi.")
@click.option("--lam", type=float, default=None, help="Rate lambda of the exponential K law.")
@click.option("--k0", type=float, default=None, help="Fixed K for a point-mass K law (instead of --lam).")
@click.option("--sigma", type=float, default=1.0, show_default=True, help="Gaussian scale sigma.")
@click.option("--gmin", type=float, default=-5.0, show_default=True, help="Lower end of the g grid.")
@click.option("--gmax", type=float, default=5.0, show_default=True, help="Upper end of the g grid.")
@click.option("--points", type=click.IntRange(min=2), default=101, show_default=True, help="Grid points.")
def density(psi: float, lam: Optional[float], k0: Optional[float], sigma: float, gmin: float, gmax: float, points: int):
    """Mixture density P(g) on an even grid (closed form where one exists)."""
    with command_logging("oracle density"):
        service = get_oracle_service()
        k_law = "point_mass" if k0 is not None else "exponential"
        spec = build_model(MixtureSpec, k_law=k_law, lam=lam, k0=k0, psi=psi, sigma=sigma)
        grid = np.linspace(gmin, gmax, points)
        if service.has_closed_form(spec):
            frame = pd.DataFrame({"g": grid, "density": service.closed_form_density(spec, grid)})
        else:
            frame = service.mixture_density_numeric(spec, grid).to_frame("g")
    _echo_frame(frame)


@oracle.command()
@click.option("--total", type=click.IntRange(min=1), required=True, help="Integer to partition.")
@click.option("--list", "list_all", is_flag=True, help="Print every partition (total <= 60).")
def partitions(total: int, list_all: bool):
    """Number of partitions of TOTAL, optionally listing them."""
    with command_logging("oracle partitions"):
        service = get_oracle_service()
        if list_all:
            listed = service.enumerate_partitions(total)
            for p in listed:
                click.echo(" ".join(str(part) for part in p.parts))
            count = len(listed)
        else:
            count = get_randkit_service().partition_count(total)
    click.echo(f"p({total}) = {count}")


@oracle.command()
@click.option("--mu", type=float, default=None, help="Unit-count tail exponent mu.")
@click.option("--alpha", type=float, default=None, help="Firm-size tail exponent alpha (WB).")
@click.option("--b", type=float, default=None, help="New-firm probability b (Simon/GPG).")
def exponents(mu: Optional[float], alpha: Optional[float], b: Optional[float]):
    """Predicted scaling exponents for the families whose parameters are given."""
    with command_logging("oracle exponents"):
        rows = get_oracle_service().scaling_exponent_table(mu=mu, alpha=alpha, b=b)
    _echo_frame(pd.DataFrame([r.model_dump() for r in rows], columns=["name", "formula", "value", "boundary", "note"]))
