"""
Pydantic models for firm compositions, growth records and model configurations.
"""

import hashlib
import math
from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.randkit_model import UINT64_MAX

PANEL_COLUMNS = [
    "firm_id",
    "period",
    "size_before",
    "size_after",
    "log_growth",
    "pct_growth",
    "unit_count",
    "herfindahl",
]


class FirmComposition(BaseModel):
    """Unit sizes x_ij of one firm."""
    model_config = ConfigDict(frozen=True)

    units: Tuple[float, ...]

    @field_validator("units")
    @classmethod
    def validate_units(cls, v):
        if len(v) == 0:
            raise ValueError("a firm needs at least one unit")
        if any(not (x > 0) or math.isinf(x) for x in v):
            raise ValueError("unit sizes must be positive and finite")
        return v

    @property
    def size(self) -> float:
        return float(math.fsum(self.units))

    @property
    def unit_count(self) -> int:
        return len(self.units)


class GrowthRecord(BaseModel):
    """One firm, one period. ``log_growth`` is None only for an extinction record."""
    model_config = ConfigDict(frozen=True)

    firm_id: int = 0
    period: int = 0
    size_before: float = Field(gt=0)
    size_after: float = Field(ge=0)
    log_growth: Optional[float] = None
    pct_growth: float = Field(ge=-1)
    unit_count: int = Field(ge=0)
    herfindahl: float = Field(gt=0, le=1)

    @model_validator(mode="after")
    def validate_growth(self):
        if self.log_growth is None:
            if self.pct_growth != -1:
                raise ValueError("log_growth may only be absent for an extinction record (pct_growth = -1)")
            return self
        expected = math.expm1(self.log_growth)
        if not math.isclose(self.pct_growth, expected, rel_tol=1e-12, abs_tol=1e-15):
            raise ValueError("pct_growth must equal exp(log_growth) - 1")
        if not math.isclose(self.size_after, self.size_before * math.exp(self.log_growth), rel_tol=1e-12):
            raise ValueError("size_after must equal size_before * exp(log_growth)")
        return self


class GrowthPanel(BaseModel):
    """Columnar table of growth records (one pandas row per firm and period)."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    records: pd.DataFrame
    config_digest: str

    @field_validator("records")
    @classmethod
    def validate_records(cls, v):
        missing = [c for c in PANEL_COLUMNS if c not in v.columns]
        if missing:
            raise ValueError(f"panel is missing columns: {missing}")
        if len(v) == 0:
            raise ValueError("panel must contain at least one record")
        if v.duplicated(subset=["firm_id", "period"]).any():
            raise ValueError("duplicated (firm_id, period) keys")
        if np.isinf(v[["size_after", "log_growth", "pct_growth"]].to_numpy(dtype=float)).any():
            raise ValueError("growth columns must be finite or absent")
        if (v.loc[v["log_growth"].notna(), "pct_growth"] <= -1).any():
            raise ValueError("pct_growth must exceed -1 wherever log_growth is present")
        return v

    def __len__(self) -> int:
        return len(self.records)

    def column(self, name: str, dropna: bool = True) -> np.ndarray:
        values = self.records[name].to_numpy(dtype=float)
        if dropna:
            values = values[~np.isnan(values)]
        return values


class FitResult(BaseModel):
    """Estimated exponent or slope with its analytic standard error."""
    exponent: float
    stderr: float = Field(ge=0)
    n_points: int = Field(ge=3)
    range: Tuple[float, float]
    intercept: Optional[float] = None
    method: str = "ols"


# ── Model configurations ─────────────────────────────────────────────

Seed = Annotated[int, Field(ge=0, le=UINT64_MAX)]


class _ConfigBase(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid", populate_by_name=True)

    def digest(self) -> str:
        """Identifier of this configuration (including its seed)."""
        payload = self.model_dump_json(by_alias=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class WyartBouchaudConfig(_ConfigBase):
    """Power-law number of units with Pareto unit sizes."""
    kind: Literal["wb"] = "wb"
    alpha: float = 1.2
    mu: float = 1.4
    sigma_unit: float = Field(default=0.2, gt=0)
    n_firms: int = Field(default=100_000, ge=1)
    xmin: float = Field(default=1.0, gt=0)
    k_grid: Optional[List[int]] = None
    unit_shocks: bool = False
    seed: Seed = 0

    @field_validator("k_grid")
    @classmethod
    def validate_k_grid(cls, v):
        if v is not None and (len(v) == 0 or any(k < 1 for k in v)):
            raise ValueError("k_grid must be a non-empty list of positive unit counts")
        return v

    @model_validator(mode="after")
    def validate_regime(self):
        if not 1 < self.mu < 2:
            raise ValueError(f"mu must lie in (1, 2), got {self.mu}")
        if self.k_grid is None and not 1 < self.alpha < self.mu:
            raise ValueError(f"need 1 < alpha < mu < 2, got alpha={self.alpha}, mu={self.mu}")
        return self


class SimonConfig(_ConfigBase):
    """Sequential unit arrivals: entry with probability b, else attachment proportional to K."""
    kind: Literal["simon"] = "simon"
    b: float = Field(default=0.1, ge=0, le=1)
    n_steps: int = Field(default=1_000_000, ge=1)
    n_seed_firms: Optional[int] = Field(default=None, ge=0)
    seed: Seed = 0

    @property
    def seed_firms(self) -> int:
        if self.n_seed_firms is not None:
            return self.n_seed_firms
        return 10_000 if self.b == 0 else 0


class GpgConfig(_ConfigBase):
    """Simon firms with log-normal units hit by Gibrat shocks."""
    kind: Literal["gpg"] = "gpg"
    b: float = Field(default=0.0, ge=0, le=1)
    n_steps: int = Field(default=1_000_000, ge=1)
    n_seed_firms: Optional[int] = Field(default=100_000, ge=0)
    unit_log_sd: float = Field(default=1.0, ge=0)
    gibrat_log_sd: float = Field(default=0.1, ge=0)
    measure_window: int = Field(default=1, ge=1)
    seed: Seed = 0

    def simon(self) -> SimonConfig:
        return SimonConfig(b=self.b, n_steps=self.n_steps, n_seed_firms=self.n_seed_firms, seed=self.seed)


class PsiMixtureConfig(_ConfigBase):
    """Exponential mixture of Gaussians with variance sigma^2 K^psi."""
    kind: Literal["psi"] = "psi"
    psi: float = -1.0
    lam: float = Field(default=1.0, alias="lambda")
    sigma: float = Field(default=1.0, gt=0)
    n_firms: int = Field(default=1_000_000, ge=1)
    seed: Seed = 0

    @field_validator("lam")
    @classmethod
    def validate_lam(cls, v):
        if not v > 0:
            raise ValueError(f"lambda must be > 0, got {v}")
        return v


class SuttonConfig(_ConfigBase):
    """Firms of integer size split uniformly over all integer partitions."""
    kind: Literal["sutton"] = "sutton"
    size_grid: List[int] = Field(default_factory=lambda: [100, 175, 305, 534, 934, 1634, 2857, 5000])
    samples_per_size: int = Field(default=2000, ge=1)
    unit_shock_sd: float = Field(default=0.05, ge=0)
    unit_shock_kind: Literal["gaussian", "laplace"] = "gaussian"
    seed: Seed = 0

    @field_validator("size_grid")
    @classmethod
    def validate_size_grid(cls, v):
        if len(v) == 0 or any(s < 1 for s in v):
            raise ValueError("size_grid must be a non-empty list of positive integers")
        if len(set(v)) != len(v):
            raise ValueError("size_grid entries must be distinct")
        return v


class FasConfig(_ConfigBase):
    """Units replaced each period by a fat-tailed number of new units."""
    kind: Literal["fas"] = "fas"
    mu: float = 1.5
    k0_grid: List[int] = Field(default_factory=lambda: [30, 100, 300, 1000, 3000, 10_000])
    n_periods: int = Field(default=1, ge=1)
    samples: int = Field(default=2000, ge=1)
    point_mass: bool = False
    seed: Seed = 0

    @field_validator("k0_grid")
    @classmethod
    def validate_k0_grid(cls, v):
        if len(v) == 0 or any(k < 1 for k in v):
            raise ValueError("k0_grid must be a non-empty list of positive unit counts")
        if len(set(v)) != len(v):
            raise ValueError("k0_grid entries must be distinct")
        return v

    @model_validator(mode="after")
    def validate_regime(self):
        if not 1 < self.mu < 2:
            raise ValueError(f"mu must lie in (1, 2), got {self.mu}")
        return self


class OpportunitiesConfig(_ConfigBase):
    """Single-unit firms receiving a Bose-Einstein number of growth shocks."""
    kind: Literal["opportunities"] = "opportunities"
    mean_opportunities: float = Field(default=20.0, gt=0)
    sigma: float = Field(default=0.05, gt=0)
    n_firms: int = Field(default=100_000, ge=1)
    seed: Seed = 0


ModelConfig = Annotated[
    Union[
        WyartBouchaudConfig,
        SimonConfig,
        GpgConfig,
        PsiMixtureConfig,
        SuttonConfig,
        FasConfig,
        OpportunitiesConfig,
    ],
    Field(discriminator="kind"),
]
