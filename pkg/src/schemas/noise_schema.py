from pydantic import BaseModel, ConfigDict, Field, TypeAdapter
from typing import Annotated, ClassVar, Literal, Optional, Union


class _NoiseBase(BaseModel):
    model_config = ConfigDict(extra="forbid")

    # Channels that act on density matrices rather than data vectors
    acts_on_state: ClassVar[bool] = False


class MixRandomSpec(_NoiseBase):
    """Convex mixture with a random state."""

    kind: Literal["mix_random"] = "mix_random"
    sigma: float = Field(..., ge=0.0, le=0.5)
    density: float = Field(default=0.8, gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)
    acts_on_state: ClassVar[bool] = True


class PhotonLossSpec(_NoiseBase):
    """Amplitude damping parameterized by the lost photon fraction."""

    kind: Literal["photon_loss"] = "photon_loss"
    fraction: float = Field(..., ge=0.0, le=1.0)
    acts_on_state: ClassVar[bool] = True


class GaussianConvSpec(_NoiseBase):
    """Thermal Gaussian convolution of square-grid data."""

    kind: Literal["gaussian_conv"] = "gaussian_conv"
    n_th: float = Field(..., gt=0.0)


class AffineSpec(_NoiseBase):
    """Affine augmentation; explicit parameters, or random ones drawn from `seed`."""

    kind: Literal["affine"] = "affine"
    theta: float = 0.0
    shear: float = Field(default=0.0, ge=0.0, le=5.0)
    shift_x: float = Field(default=0.0, ge=-0.2, le=0.2)
    shift_p: float = Field(default=0.0, ge=-0.2, le=0.2)
    zoom_x: float = Field(default=1.0, ge=0.8, le=1.2)
    zoom_p: float = Field(default=1.0, ge=0.8, le=1.2)
    flip_horizontal: bool = False
    flip_vertical: bool = False
    seed: Optional[int] = Field(default=None, ge=0)


class AdditiveGaussianSpec(_NoiseBase):
    """Additive zero-mean Gaussian noise."""

    kind: Literal["additive_gaussian"] = "additive_gaussian"
    sigma_G: float = Field(..., ge=0.0)
    seed: int = Field(default=0, ge=0)


class PepperSpec(_NoiseBase):
    """Zero a random fraction of the data points."""

    kind: Literal["pepper"] = "pepper"
    fraction: float = Field(..., ge=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)


NoiseSpec = Annotated[
    Union[MixRandomSpec, PhotonLossSpec, GaussianConvSpec, AffineSpec, AdditiveGaussianSpec, PepperSpec],
    Field(discriminator="kind"),
]

noise_spec_adapter: TypeAdapter = TypeAdapter(NoiseSpec)
