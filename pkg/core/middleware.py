"""
Command logging for the granular-growth CLI.
"""

import time
import uuid
from contextlib import contextmanager
from typing import Iterator

from core.logging import current_run_id, get_logger, set_run_id
from core.exceptions import GrowthToolkitException

logger = get_logger(__name__)


@contextmanager
def command_logging(command: str) -> Iterator[str]:
    """
    Log the start, end and duration of a CLI command.

    A short run identifier is installed in the logging context for the
    duration of the command, so every record emitted meanwhile (worker
    threads included) carries it. The identifier is also yielded.
    """
    previous = current_run_id()
    run_id = uuid.uuid4().hex[:8]
    set_run_id(run_id)
    start_time = time.perf_counter()
    logger.info(f"{command} - started")

    try:
        yield run_id
    except GrowthToolkitException as e:
        logger.error(f"{command} - {e.error_code}: {e.message} - after {time.perf_counter() - start_time:.3f}s")
        raise
    except Exception as e:
        logger.error(f"{command} - unhandled error: {e} - after {time.perf_counter() - start_time:.3f}s", exc_info=True)
        raise
    else:
        logger.info(f"{command} - finished in {time.perf_counter() - start_time:.3f}s")
    finally:
        set_run_id(previous)
