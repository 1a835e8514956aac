"""
Base service class for granular-growth services.
"""

from abc import ABC
from typing import Any, Optional, Type, TypeVar

from pydantic import BaseModel, ValidationError

from core.config import Settings, get_settings
from core.exceptions import ParameterException
from core.logging import LoggerMixin
from core.workers import WorkerPoolManager, worker_pool

M = TypeVar("M", bound=BaseModel)


def validation_message(error: ValidationError) -> str:
    """Flatten a pydantic error into one readable line."""
    parts = []
    for item in error.errors():
        location = ".".join(str(p) for p in item.get("loc", ()))
        parts.append(f"{location}: {item.get('msg')}" if location else item.get("msg", ""))
    return "; ".join(parts)


def build_model(model_cls: Type[M], **data: Any) -> M:
    """Construct a pydantic model, converting validation errors into ParameterException."""
    try:
        return model_cls(**data)
    except ValidationError as e:
        first = e.errors()[0] if e.errors() else {}
        parameter = ".".join(str(p) for p in first.get("loc", ())) or None
        raise ParameterException(
            f"Invalid {model_cls.__name__}: {validation_message(e)}", parameter=parameter
        )


class BaseService(LoggerMixin, ABC):
    """Base service class with common functionality."""

    def __init__(self):
        """Initialize the base service."""
        self._settings: Optional[Settings] = None

    @property
    def settings(self) -> Settings:
        """Get the application settings."""
        if self._settings is None:
            self._settings = get_settings()
        return self._settings

    @property
    def pool(self) -> WorkerPoolManager:
        """Get the shared worker pool."""
        return worker_pool

    def health_check(self) -> dict:
        """
        Perform a health check for the service.

        Returns:
            Health check results
        """
        try:
            pool_health = worker_pool.health_check()

            return {
                "service": self.__class__.__name__,
                "status": "healthy",
                "workers": pool_health
            }

        except Exception as e:
            self.logger.error(f"Health check failed for {self.__class__.__name__}: {e}")
            return {
                "service": self.__class__.__name__,
                "status": "unhealthy",
                "error": str(e)
            }
