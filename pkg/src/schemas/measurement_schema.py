from pydantic import BaseModel, ConfigDict, Field, model_validator
from typing import Literal, Optional, Tuple

from src.physics.measure import GridLayout, MeasurementKind


class GridSpec(BaseModel):
    """Phase-space grid: a square lattice or random points in a disk."""

    model_config = ConfigDict(extra="forbid")

    layout: GridLayout = GridLayout.SQUARE
    extent: Tuple[float, float] = (-5.0, 5.0)
    nx: int = Field(default=32, ge=2)
    ny: int = Field(default=32, ge=2)
    # scatter layout only
    points: Optional[int] = Field(default=None, ge=1)
    radius: float = Field(default=5.0, gt=0.0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def validate_layout(self) -> "GridSpec":
        if not self.extent[1] > self.extent[0]:
            raise ValueError(f"extent {self.extent} is empty")
        if self.layout is GridLayout.SCATTER and self.points is None:
            raise ValueError("scatter grids need 'points'")
        return self


class MeasurementSpec(BaseModel):
    """Which operators to build, on which grid, at which cutoff."""

    model_config = ConfigDict(extra="forbid")

    kind: MeasurementKind = MeasurementKind.HUSIMI_PROJECTOR
    photon_number: int = Field(default=0, ge=0)
    grid: GridSpec = Field(default_factory=GridSpec)
    cutoff: int = Field(default=32, ge=2)
    # apply the 1/pi (Husimi) or 2/pi (Wigner) normalization to the operators
    scaled: bool = True


class DataSpec(BaseModel):
    """What to record from a state: the quasi-probability and its normalization."""

    model_config = ConfigDict(extra="forbid")

    function: Literal["husimi", "wigner", "generalized_q"] = "husimi"
    photon_number: int = Field(default=0, ge=0)
    grid: GridSpec = Field(default_factory=GridSpec)
    unit_max: bool = True
