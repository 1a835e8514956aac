"""
Pydantic models for the random-variate layer.
"""

from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

UINT64_MAX = 2 ** 64 - 1


class RngStream(BaseModel):
    """A (seed, substream) pair. Equal pairs always produce equal variate sequences."""
    model_config = ConfigDict(frozen=True)

    seed: int = Field(ge=0, le=UINT64_MAX)
    stream_id: int = Field(default=0, ge=0, le=UINT64_MAX)

    def generator(self) -> np.random.Generator:
        """A fresh PCG64 generator positioned at the start of this substream."""
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.PCG64(sequence))

    def derive(self, *keys: int) -> "RngStream":
        """Child substream keyed by integers (block index, period, ...), never by worker."""
        sequence = np.random.SeedSequence(entropy=self.seed, spawn_key=(self.stream_id, *keys))
        child_id = int(sequence.generate_state(1, dtype=np.uint64)[0])
        return RngStream(seed=self.seed, stream_id=child_id)


class ParetoParams(BaseModel):
    """Continuous Pareto law with CCDF (xmin/x)^mu for x >= xmin."""
    model_config = ConfigDict(frozen=True)

    xmin: float = Field(default=1.0, gt=0)
    mu: float = Field(gt=0)


class StableParams(BaseModel):
    """Stable law parameters in the continuous S1 parameterization."""
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(gt=0, le=2)
    beta: float = Field(default=0.0, ge=-1, le=1)
    scale: float = Field(default=1.0, gt=0)
    location: float = 0.0


class Partition(BaseModel):
    """An integer partition: non-increasing positive parts summing to ``total``."""
    model_config = ConfigDict(frozen=True)

    parts: Tuple[int, ...]
    total: int = Field(ge=1)

    @field_validator("parts")
    @classmethod
    def validate_parts(cls, v):
        if not v:
            raise ValueError("a partition needs at least one part")
        if any(p < 1 for p in v):
            raise ValueError("all parts must be >= 1")
        if any(a < b for a, b in zip(v, v[1:])):
            raise ValueError("parts must be sorted non-increasing")
        return v

    @model_validator(mode="after")
    def validate_total(self):
        if sum(self.parts) != self.total:
            raise ValueError(f"parts sum to {sum(self.parts)}, expected {self.total}")
        return self

    @property
    def unit_count(self) -> int:
        return len(self.parts)
