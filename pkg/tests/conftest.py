"""
Shared fixtures: fresh settings per test, service instances and small panels.
"""

import numpy as np
import pandas as pd
import pytest

from core.config import get_settings
from core.workers import worker_pool
from models.growth_model import PANEL_COLUMNS, GrowthPanel
from services.experiment_service import ExperimentService
from services.growth_models_service import GrowthModelsService
from services.oracle_service import OracleService
from services.randkit_service import RandkitService
from services.stats_service import StatsService


@pytest.fixture(autouse=True)
def fresh_settings():
    """Settings are cached; clear them around every test so env changes stay local."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()
    worker_pool.close()


@pytest.fixture
def settings_env(monkeypatch):
    """Set toolkit environment variables for one test."""
    def apply(**values):
        for name, value in values.items():
            monkeypatch.setenv(name, str(value))
        get_settings.cache_clear()
        return get_settings()
    return apply


@pytest.fixture
def randkit() -> RandkitService:
    return RandkitService()


@pytest.fixture
def models(randkit) -> GrowthModelsService:
    return GrowthModelsService(randkit)


@pytest.fixture
def stats_service() -> StatsService:
    return StatsService()


@pytest.fixture
def oracle(stats_service) -> OracleService:
    return OracleService(stats_service)


@pytest.fixture
def experiments() -> ExperimentService:
    return ExperimentService()


@pytest.fixture
def make_panel():
    """Build a single-period panel from size and log-growth arrays."""
    def build(size_before, log_growth, unit_count=None, herfindahl=None) -> GrowthPanel:
        size_before = np.asarray(size_before, dtype=float)
        log_growth = np.asarray(log_growth, dtype=float)
        n = size_before.size
        unit_count = np.ones(n, dtype=np.int64) if unit_count is None else np.asarray(unit_count)
        herfindahl = np.ones(n) if herfindahl is None else np.asarray(herfindahl, dtype=float)
        records = pd.DataFrame({
            "firm_id": np.arange(n),
            "period": np.zeros(n, dtype=np.int64),
            "size_before": size_before,
            "size_after": size_before * np.exp(log_growth),
            "log_growth": log_growth,
            "pct_growth": np.expm1(log_growth),
            "unit_count": unit_count,
            "herfindahl": herfindahl,
        })[PANEL_COLUMNS]
        return GrowthPanel(records=records, config_digest="test")
    return build
