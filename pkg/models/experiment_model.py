"""
Pydantic models for experiment configuration and run manifests.
"""

from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.growth_model import ModelConfig, Seed

Statistic = Literal["mean_abs", "rms", "sd"]


class _AnalysisBase(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Optional[str] = None

    @property
    def output_stem(self) -> str:
        return self.name or self.kind


class DensityAnalysis(_AnalysisBase):
    """KDE of the growth rates; density.csv with columns (g, density)."""
    kind: Literal["density"] = "density"
    column: Literal["log_growth", "pct_growth"] = "log_growth"
    grid_size: int = Field(default=512, ge=16)
    bandwidth: Optional[float] = Field(default=None, gt=0)


class SizeVolatilityAnalysis(_AnalysisBase):
    """Binned dispersion of g against firm size."""
    kind: Literal["size_volatility"] = "size_volatility"
    statistics: List[Statistic] = Field(default_factory=lambda: ["mean_abs", "rms"])
    n_bins: int = Field(default=20, ge=3)
    size_column: Literal["size_before", "unit_count"] = "size_before"

    @model_validator(mode="before")
    @classmethod
    def accept_single_statistic(cls, data: Any):
        if isinstance(data, dict) and "statistic" in data:
            data = dict(data)
            data["statistics"] = [data.pop("statistic")]
        return data

    @field_validator("statistics")
    @classmethod
    def validate_statistics(cls, v):
        if not v:
            raise ValueError("at least one statistic is required")
        if len(set(v)) != len(v):
            raise ValueError("statistics must be distinct")
        return v


class TailAnalysis(_AnalysisBase):
    """Hill estimates of a tail over a sweep of order-statistic counts."""
    kind: Literal["tail"] = "tail"
    side: Literal["abs", "positive", "negative", "size"] = "abs"
    k: Optional[int] = Field(default=None, ge=10)
    sweep_points: int = Field(default=12, ge=3)


class HerfindahlScalingAnalysis(_AnalysisBase):
    """Median and mean H per fixed unit count (needs a WB run with ``k_grid``)."""
    kind: Literal["herfindahl_scaling"] = "herfindahl_scaling"


class QQStableAnalysis(_AnalysisBase):
    """Rescaled FAS growth against a sampled stable reference; qq.csv."""
    kind: Literal["qq_stable"] = "qq_stable"
    unit_count: Optional[int] = Field(default=None, ge=1)
    n_levels: int = Field(default=99, ge=3)
    central_mass: float = Field(default=0.98, gt=0, lt=1)

    @property
    def output_stem(self) -> str:
        return self.name or "qq"


class UnitCountHistogramAnalysis(_AnalysisBase):
    """Distribution of the number of units per firm."""
    kind: Literal["unit_count_hist"] = "unit_count_hist"


Analysis = Annotated[
    Union[
        DensityAnalysis,
        SizeVolatilityAnalysis,
        TailAnalysis,
        HerfindahlScalingAnalysis,
        QQStableAnalysis,
        UnitCountHistogramAnalysis,
    ],
    Field(discriminator="kind"),
]


class ExperimentConfig(BaseModel):
    """A model run plus the analyses to write out."""
    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ModelConfig
    analyses: List[Analysis]
    output_dir: Path
    seed: Seed = 0

    @field_validator("analyses")
    @classmethod
    def validate_analyses(cls, v):
        if not v:
            raise ValueError("at least one analysis is required")
        stems = [a.output_stem for a in v]
        duplicates = sorted({s for s in stems if stems.count(s) > 1})
        if duplicates:
            raise ValueError(f"analyses write to the same file: {duplicates}; give them distinct names")
        return v

    @model_validator(mode="after")
    def validate_applicability(self):
        for analysis in self.analyses:
            if analysis.kind == "herfindahl_scaling":
                if self.model.kind != "wb" or self.model.k_grid is None:
                    raise ValueError("herfindahl_scaling needs a wb model with k_grid")
            if analysis.kind == "qq_stable" and self.model.kind != "fas":
                raise ValueError("qq_stable needs a fas model")
        return self

    def seeded_model(self):
        """The model configuration carrying the experiment seed."""
        return self.model.model_copy(update={"seed": self.seed})


class OutputChecksum(BaseModel):
    """One emitted file."""
    file: str
    sha256: str
    rows: Optional[int] = None


class RunManifest(BaseModel):
    """Record of one experiment run, written as manifest.json."""
    config: Dict[str, Any]
    tool_version: str
    seed: Seed
    config_digest: str
    started_at: str
    finished_at: str
    sampler: Dict[str, Any] = {}
    outputs: List[OutputChecksum] = []


class SelftestCheck(BaseModel):
    """Outcome of one invariant check."""
    name: str
    passed: bool
    detail: str = ""
