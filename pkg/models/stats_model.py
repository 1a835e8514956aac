"""
Pydantic models for estimator outputs.
"""

from typing import List, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, field_validator
from scipy.integrate import trapezoid


class DensityCurve(BaseModel):
    """Grid of (abscissa, density) pairs."""
    model_config = ConfigDict(frozen=True)

    points: Tuple[Tuple[float, float], ...]

    @field_validator("points")
    @classmethod
    def validate_points(cls, v):
        if len(v) < 2:
            raise ValueError("a density curve needs at least two points")
        xs = [p[0] for p in v]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("abscissas must be strictly increasing")
        if any(not (p[1] >= 0) for p in v):
            raise ValueError("densities must be non-negative")
        return v

    @classmethod
    def from_arrays(cls, x: np.ndarray, y: np.ndarray) -> "DensityCurve":
        return cls(points=tuple(zip(map(float, x), map(float, y))))

    @property
    def x(self) -> np.ndarray:
        return np.array([p[0] for p in self.points])

    @property
    def density(self) -> np.ndarray:
        return np.array([p[1] for p in self.points])

    def integral(self) -> float:
        """Trapezoid integral over the grid."""
        return float(trapezoid(self.density, self.x))

    def to_frame(self, x_name: str = "g") -> pd.DataFrame:
        return pd.DataFrame({x_name: self.x, "density": self.density})


class BinnedPoint(BaseModel):
    """One occupied bin of a binned curve."""
    model_config = ConfigDict(frozen=True)

    center: float
    value: float
    count: int


class BinnedCurve(BaseModel):
    """Per-bin statistic over strictly increasing bin centers."""
    model_config = ConfigDict(frozen=True)

    points: Tuple[BinnedPoint, ...]
    statistic: str = "value"

    @field_validator("points")
    @classmethod
    def validate_points(cls, v):
        centers = [p.center for p in v]
        if any(b <= a for a, b in zip(centers, centers[1:])):
            raise ValueError("bin centers must be strictly increasing")
        if any(p.count < 0 for p in v):
            raise ValueError("bin counts must be non-negative")
        return v

    @classmethod
    def from_arrays(
        cls, centers: np.ndarray, values: np.ndarray, counts: np.ndarray, statistic: str = "value"
    ) -> "BinnedCurve":
        points = [
            BinnedPoint(center=float(c), value=float(v), count=int(n))
            for c, v, n in zip(centers, values, counts)
        ]
        return cls(points=tuple(points), statistic=statistic)

    @property
    def centers(self) -> np.ndarray:
        return np.array([p.center for p in self.points])

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    @property
    def counts(self) -> np.ndarray:
        return np.array([p.count for p in self.points], dtype=np.int64)

    def __len__(self) -> int:
        return len(self.points)

    def to_frame(self, center_name: str = "bin_center") -> pd.DataFrame:
        return pd.DataFrame({
            center_name: self.centers,
            self.statistic: self.values,
            "count": self.counts,
        })


class ExponentialFit(BaseModel):
    """Exponential law fitted by its mean, with the KS distance of the fit."""
    rate: float
    ks: float
    n_samples: int
    discrete: bool = False


class QQComparison(BaseModel):
    """Matched quantiles of an empirical sample and a reference sample."""
    levels: List[float]
    empirical: List[float]
    reference: List[float]
    max_relative_error: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "quantile_level": self.levels,
            "empirical": self.empirical,
            "stable_reference": self.reference,
        })
