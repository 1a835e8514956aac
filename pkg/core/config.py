"""
Core configuration module for the granular-growth toolkit.
Handles environment variables, simulation limits and logging settings.
"""

import os
import logging
from typing import Dict, Any, Optional
from functools import lru_cache
from enum import Enum
from dotenv import load_dotenv

from core.exceptions import ConfigurationException

# Load environment variables
load_dotenv()


class Environment(str, Enum):
    """Application environment enum."""
    DEVELOPMENT = "development"
    STAGING = "staging"
    PRODUCTION = "production"


def _int_env(name: str, default: int, minimum: int = 1) -> int:
    raw = os.getenv(name)
    if raw is None or raw.strip() == "":
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigurationException(f"{name} must be an integer, got '{raw}'", setting=name)
    if value < minimum:
        raise ConfigurationException(f"{name} must be >= {minimum}, got {value}", setting=name)
    return value


class Settings:
    """Application settings with validation."""

    def __init__(self):
        # Application settings
        self.app_name: str = "granular-growth"
        self.app_version: str = "1.0.0"
        self.environment: Environment = Environment(
            os.getenv("ENVIRONMENT", "development").lower()
        )
        self.debug: bool = os.getenv("DEBUG", "false").lower() == "true"

        # Worker settings
        self.max_workers: int = _int_env("GRANULAR_GROWTH_THREADS", os.cpu_count() or 1)
        self.block_size: int = _int_env("GRANULAR_GROWTH_BLOCK_SIZE", 4096)

        # Sampler limits
        self.power_law_table_max: int = _int_env("GRANULAR_GROWTH_KMAX", 10_000_000, minimum=100)
        self.partition_table_limit: int = _int_env("GRANULAR_GROWTH_PARTITION_TABLE", 1000, minimum=60)
        self.partition_ceiling: int = _int_env("GRANULAR_GROWTH_PARTITION_CEILING", 10_000, minimum=5000)

        # Estimator settings
        self.min_bin_count: int = _int_env("GRANULAR_GROWTH_MIN_BIN_COUNT", 30)
        self.stable_reference_samples: int = _int_env("GRANULAR_GROWTH_STABLE_REFERENCE", 10_000_000, minimum=1000)

        # Logging settings
        self.log_level: str = os.getenv("LOG_LEVEL", "INFO").upper()
        self.log_format: str = "%(asctime)s - %(run_id)s - %(name)s - %(levelname)s - %(message)s"
        self.log_file: Optional[str] = os.getenv("LOG_FILE")

        # Validate log level
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if self.log_level not in valid_levels:
            self.log_level = "INFO"


@lru_cache()
def get_settings() -> Settings:
    """Get cached application settings."""
    return Settings()


def validate_required_settings(settings: Settings) -> None:
    """Validate that the sampler limits are mutually consistent."""
    problems = []
    if settings.partition_table_limit > settings.partition_ceiling:
        problems.append(
            "GRANULAR_GROWTH_PARTITION_TABLE exceeds GRANULAR_GROWTH_PARTITION_CEILING"
        )
    if settings.max_workers > 4 * (os.cpu_count() or 1):
        problems.append(
            f"GRANULAR_GROWTH_THREADS={settings.max_workers} is far above the machine parallelism"
        )

    if problems:
        error_msg = "; ".join(problems)
        if settings.environment == Environment.PRODUCTION:
            raise ConfigurationException(error_msg)
        else:
            logging.warning(error_msg)


def get_sampler_config() -> Dict[str, Any]:
    """Get the sampler limits as a plain dictionary (echoed into run manifests)."""
    settings = get_settings()
    validate_required_settings(settings)

    return {
        "block_size": settings.block_size,
        "power_law_table_max": settings.power_law_table_max,
        "partition_table_limit": settings.partition_table_limit,
        "partition_ceiling": settings.partition_ceiling,
        "min_bin_count": settings.min_bin_count,
        "stable_reference_samples": settings.stable_reference_samples,
    }
