"""
Logging configuration for the granular-growth toolkit.

Every record carries a ``run_id`` attribute: the identifier of the CLI command
being executed, or "-" outside of one.
"""

import logging
import logging.handlers
import sys
from contextvars import ContextVar
from pathlib import Path
from typing import Optional
from .config import get_settings

_run_id: ContextVar[str] = ContextVar("run_id", default="-")


def set_run_id(run_id: Optional[str]) -> None:
    _run_id.set(run_id or "-")


def current_run_id() -> str:
    return _run_id.get()


class RunContextFilter(logging.Filter):
    """Stamps the current run identifier onto each record."""

    def filter(self, record: logging.LogRecord) -> bool:
        record.run_id = _run_id.get()
        return True


class ColoredFormatter(logging.Formatter):
    """Level names in color, for terminals only."""

    COLORS = {
        'DEBUG': '\033[36m',     # Cyan
        'INFO': '\033[32m',      # Green
        'WARNING': '\033[33m',   # Yellow
        'ERROR': '\033[31m',     # Red
        'CRITICAL': '\033[35m',  # Magenta
    }
    RESET = '\033[0m'

    def format(self, record):
        record = logging.makeLogRecord(record.__dict__)
        record.levelname = f"{self.COLORS.get(record.levelname, '')}{record.levelname}{self.RESET}"
        return super().format(record)


def setup_logging(
    log_level: Optional[str] = None,
    log_file: Optional[str] = None,
    log_format: Optional[str] = None
) -> None:
    """
    Configure the root logger for a CLI invocation.

    Console output goes to stderr; stdout is reserved for command output
    (tables, CSV, file listings). Colors are used only when stderr is a
    terminal.

    Args:
        log_level: Logging level (DEBUG, INFO, WARNING, ERROR, CRITICAL)
        log_file: Optional file path for a rotating log file
        log_format: Custom log format string
    """
    settings = get_settings()

    level = getattr(logging, (log_level or settings.log_level).upper(), logging.INFO)
    format_string = log_format or settings.log_format
    file_path = log_file or settings.log_file

    root_logger = logging.getLogger()
    for handler in root_logger.handlers[:]:
        root_logger.removeHandler(handler)
    root_logger.setLevel(level)

    context = RunContextFilter()
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setLevel(level)
    console_handler.addFilter(context)
    if sys.stderr.isatty():
        console_handler.setFormatter(ColoredFormatter(format_string))
    else:
        console_handler.setFormatter(logging.Formatter(format_string))
    root_logger.addHandler(console_handler)

    if file_path:
        Path(file_path).parent.mkdir(parents=True, exist_ok=True)
        file_handler = logging.handlers.RotatingFileHandler(
            file_path,
            maxBytes=10 * 1024 * 1024,  # 10MB
            backupCount=5
        )
        file_handler.setLevel(level)
        file_handler.addFilter(context)
        file_handler.setFormatter(logging.Formatter(format_string))
        root_logger.addHandler(file_handler)

    logging.getLogger(__name__).debug(
        f"Logging configured - Level: {logging.getLevelName(level)}, File: {file_path or 'Console only'}"
    )


def get_logger(name: str) -> logging.Logger:
    return logging.getLogger(name)


class LoggerMixin:
    """Mixin class to add logging capabilities to any class."""

    @property
    def logger(self) -> logging.Logger:
        return get_logger(f"{self.__class__.__module__}.{self.__class__.__name__}")
