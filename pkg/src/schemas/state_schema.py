from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, model_validator
from typing import Annotated, List, Literal, Union

import numpy as np

from src.physics.fock import DensityMatrix


class _StateBase(BaseModel):
    """Fields shared by every state family."""

    model_config = ConfigDict(extra="forbid")

    cutoff: int = Field(default=32, ge=2, description="Fock-space cutoff")


class _LogicalMixin(BaseModel):
    mu: Literal[0, 1] = Field(default=0, description="Logical index")


# =============================================================================
# State families
# =============================================================================

class FockSpec(_StateBase):
    """Fock state |n>."""

    family: Literal["fock"] = "fock"
    n: int = Field(..., ge=0, le=16, examples=[1])

    @model_validator(mode="after")
    def validate_support(self) -> "FockSpec":
        if self.n >= self.cutoff:
            raise ValueError(f"n={self.n} must be below cutoff {self.cutoff}")
        return self


class CoherentSpec(_StateBase):
    """Coherent state |alpha>."""

    family: Literal["coherent"] = "coherent"
    alpha_re: float = 0.0
    alpha_im: float = 0.0

    @property
    def alpha(self) -> complex:
        return complex(self.alpha_re, self.alpha_im)

    @model_validator(mode="after")
    def validate_alpha(self) -> "CoherentSpec":
        if abs(self.alpha) > 3.0:
            raise ValueError(f"|alpha|={abs(self.alpha):.6g} must not exceed 3")
        return self


class ThermalSpec(_StateBase):
    """Thermal state with mean occupation n_th."""

    family: Literal["thermal"] = "thermal"
    n_th: float = Field(..., ge=0.0, le=16.0)


class NumSpec(_StateBase, _LogicalMixin):
    """Numerically optimized code state with mean photon number 1.562."""

    family: Literal["num"] = "num"
    cutoff: int = Field(default=32, ge=5)


class BinomialSpec(_StateBase, _LogicalMixin):
    """Binomial code state."""

    family: Literal["binomial"] = "binomial"
    S: int = Field(..., ge=1, le=10)
    N: int = Field(..., ge=2)

    @model_validator(mode="after")
    def validate_support(self) -> "BinomialSpec":
        limit = self.cutoff // (self.S + 1) - 1
        if self.N > limit:
            raise ValueError(f"N={self.N} exceeds cutoff/(S+1) - 1 = {limit}")
        return self


class CatSpec(_StateBase, _LogicalMixin):
    """Cat code state."""

    family: Literal["cat"] = "cat"
    alpha_re: float = 2.0
    alpha_im: float = 0.0
    S: int = Field(default=0, ge=0, le=2)

    @property
    def alpha(self) -> complex:
        return complex(self.alpha_re, self.alpha_im)

    @model_validator(mode="after")
    def validate_alpha(self) -> "CatSpec":
        if not 1.0 <= abs(self.alpha) <= 3.0:
            raise ValueError(f"|alpha|={abs(self.alpha):.6g} must lie in [1, 3]")
        return self


class GkpSpec(_StateBase, _LogicalMixin):
    """Finite-energy GKP state."""

    family: Literal["gkp"] = "gkp"
    Delta: float = Field(default=0.3, ge=0.2, le=0.5)
    grid_extent: int = Field(default=20, ge=1)


class RandomSpec(_StateBase):
    """Random physical state."""

    family: Literal["random"] = "random"
    density: float = Field(default=0.8, gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)


StateSpec = Annotated[
    Union[FockSpec, CoherentSpec, ThermalSpec, NumSpec, BinomialSpec, CatSpec, GkpSpec, RandomSpec],
    Field(discriminator="family"),
]

state_spec_adapter: TypeAdapter = TypeAdapter(StateSpec)

STATE_FAMILIES = ("fock", "coherent", "thermal", "num", "binomial", "cat", "gkp", "random")


# =============================================================================
# Payloads
# =============================================================================

class DensityMatrixPayload(BaseModel):
    """JSON form of a density matrix, real and imaginary parts as nested lists."""

    model_config = ConfigDict(extra="forbid")

    dim: int = Field(..., ge=2)
    re: List[List[float]]
    im: List[List[float]]

    @model_validator(mode="after")
    def validate_shape(self) -> "DensityMatrixPayload":
        for part in (self.re, self.im):
            if len(part) != self.dim or any(len(row) != self.dim for row in part):
                raise ValueError(f"matrix parts must be {self.dim}x{self.dim}")
        return self

    @classmethod
    def from_array(cls, rho: DensityMatrix) -> "DensityMatrixPayload":
        rho = np.asarray(rho, dtype=np.complex128)
        return cls(dim=rho.shape[0], re=rho.real.tolist(), im=rho.imag.tolist())

    def to_array(self) -> DensityMatrix:
        return np.asarray(self.re, dtype=np.float64) + 1j * np.asarray(self.im, dtype=np.float64)
