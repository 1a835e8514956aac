"""
Pydantic models for the analytic reference layer.
"""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class MixtureSpec(BaseModel):
    """Gaussian scale mixture: K from ``k_law``, then g ~ Normal(0, sigma^2 K^psi)."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    k_law: Literal["exponential", "point_mass"] = "exponential"
    lam: Optional[float] = Field(default=None, alias="lambda")
    k0: Optional[float] = None
    psi: float
    sigma: float = Field(gt=0)

    @model_validator(mode="after")
    def validate_law(self):
        if self.k_law == "exponential":
            if self.lam is None or not self.lam > 0:
                raise ValueError("exponential K law needs lambda > 0")
        elif self.k0 is None or not self.k0 > 0:
            raise ValueError("point-mass K law needs K0 > 0")
        return self


class ExponentPrediction(BaseModel):
    """One row of the scaling-exponent table."""
    name: str
    formula: str
    value: float
    boundary: bool = False
    note: str = ""
