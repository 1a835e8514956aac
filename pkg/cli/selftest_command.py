"""
``selftest``: the quick invariant suite.
"""

import click

from core.logging import get_logger
from core.middleware import command_logging
from services.selftest_service import SelftestService

logger = get_logger(__name__)


@click.command()
@click.pass_context
def selftest(ctx: click.Context):
    """Run the invariant checks; exit 0 when all pass, 1 otherwise."""
    service = SelftestService()
    logger.info(f"Selftest environment: {service.health_check()}")
    with command_logging("selftest"):
        results = service.run()
    for result in results:
        status = "ok" if result.passed else "FAIL"
        click.echo(f"{status:4}  {result.name}  {result.detail}")
    failed = [r.name for r in results if not r.passed]
    click.echo(f"{len(results) - len(failed)}/{len(results)} checks passed")
    if failed:
        ctx.exit(1)
