"""
Command documents loaded from ``--config``.

Every model rejects unknown keys so that a misspelt option fails loudly
instead of silently falling back to a default.
"""
from enum import Enum
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from typing import List, Literal, Optional

from src.schemas.measurement_schema import DataSpec, GridSpec
from src.schemas.noise_schema import NoiseSpec
from src.schemas.state_schema import STATE_FAMILIES, StateSpec


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class LossKind(str, Enum):
    """Enum for the standard reconstruction losses."""
    L1 = "L1"
    L2 = "L2"
    CE = "CE"
    KL = "KL"


class ReconstructionMethod(str, Enum):
    """Enum for reconstruction backends."""
    IMLE = "imle"
    CHOLESKY = "cholesky"
    CGAN = "cgan"


class AdamConfig(StrictModel):
    """Adam hyper-parameters with the exponential learning-rate schedule l0 * C^(i/s)."""

    learning_rate: float = Field(default=2e-4, gt=0.0)
    beta1: float = Field(default=0.5, ge=0.0, lt=1.0)
    beta2: float = Field(default=0.5, ge=0.0, lt=1.0)
    epsilon: float = Field(default=1e-7, gt=0.0)
    decay_rate: float = Field(default=0.96, gt=0.0, le=1.0)
    decay_steps: int = Field(default=1000, ge=1)


# =============================================================================
# Classifier
# =============================================================================

class ClassifierConfig(StrictModel):
    """Training recipe for the phase-space image classifier."""

    classes: List[str] = Field(default_factory=lambda: ["fock", "coherent", "thermal", "num", "binomial", "cat", "gkp"])
    train_per_class: int = Field(default=600, ge=1)
    test_per_class: int = Field(default=150, ge=0)
    full_scale: bool = Field(default=False, description="Use the 43,762 / 8,670 sample counts")
    cutoff: int = Field(default=32, ge=5)
    grid: GridSpec = Field(default_factory=lambda: GridSpec(nx=32, ny=32))

    epochs: int = Field(default=10, ge=1)
    batch_size: int = Field(default=32, ge=1)
    optimizer: AdamConfig = Field(default_factory=lambda: AdamConfig(decay_rate=1.0))
    dropout: float = Field(default=0.4, ge=0.0, lt=1.0)
    internal_noise: float = Field(default=0.005, ge=0.0)

    augment: bool = True
    train_noise_max: float = Field(default=0.05, ge=0.0, description="sigma_G ~ U[0, max] per epoch")
    mix_sigma_max: float = Field(default=0.5, ge=0.0, le=0.5)
    mix_density: float = Field(default=0.8, gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)

    @field_validator("classes")
    @classmethod
    def validate_classes(cls, v: List[str]) -> List[str]:
        """Validate class names are known, non-random families without repeats."""
        allowed = set(STATE_FAMILIES) - {"random"}
        unknown = [name for name in v if name not in allowed]
        if unknown:
            raise ValueError(f"unknown classes {unknown}; allowed: {sorted(allowed)}")
        if len(set(v)) != len(v) or len(v) < 2:
            raise ValueError("classes must be at least two distinct families")
        return v


# =============================================================================
# Reconstruction
# =============================================================================

class KnownNoise(StrictModel):
    """Noise model attached to the generator output."""

    kind: Literal["additive_gaussian", "gaussian_conv"]
    sigma_G: float = Field(default=0.0, ge=0.0)
    n_th: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def validate_parameter(self) -> "KnownNoise":
        if self.kind == "gaussian_conv" and not self.n_th > 0:
            raise ValueError("gaussian_conv known noise needs n_th > 0")
        return self


class FitControl(StrictModel):
    """Iteration budget, stopping rule and logging cadence shared by all backends."""

    max_iters: int = Field(default=1000, ge=1)
    tol: float = Field(default=1e-5, ge=0.0)
    window: int = Field(default=100, ge=1)
    windows: int = Field(default=5, ge=2)
    min_iters: int = Field(default=500, ge=0)
    target_fidelity: Optional[float] = Field(default=None, gt=0.0, le=1.0, description="Stop once reached")
    log_every: int = Field(default=100, ge=1)


class ImleConfig(StrictModel):
    control: FitControl = Field(default_factory=FitControl)


class CholeskyFitConfig(StrictModel):
    """Direct (raw tensor) or generator parameterization trained on a standard loss."""

    loss: LossKind = LossKind.L2
    parameterization: Literal["direct", "generator"] = "direct"
    optimizer: AdamConfig = Field(default_factory=lambda: AdamConfig(learning_rate=0.01, beta1=0.9, beta2=0.999, decay_rate=1.0))
    generator_optimizer: AdamConfig = Field(default_factory=AdamConfig, description="Used when parameterization is generator")
    control: FitControl = Field(default_factory=FitControl)
    seed: int = Field(default=0, ge=0)


class CganConfig(StrictModel):
    """Adversarial reconstruction hyper-parameters."""

    lambda_l1: float = Field(default=1.0, ge=0.0)
    lambda_gp: float = Field(default=10.0, ge=0.0)
    penalty_point: Literal["fake", "interpolated"] = "fake"
    generator_optimizer: AdamConfig = Field(default_factory=AdamConfig)
    discriminator_optimizer: AdamConfig = Field(default_factory=AdamConfig)
    control: FitControl = Field(default_factory=FitControl)
    seed: int = Field(default=0, ge=0)


class ReconstructionConfig(StrictModel):
    method: ReconstructionMethod = ReconstructionMethod.CGAN
    imle: ImleConfig = Field(default_factory=ImleConfig)
    cholesky: CholeskyFitConfig = Field(default_factory=CholeskyFitConfig)
    cgan: CganConfig = Field(default_factory=CganConfig)
    known_noise: Optional[KnownNoise] = None


# =============================================================================
# Dataset and benchmark
# =============================================================================

class DatasetConfig(StrictModel):
    """
    A dataset is either an explicit list of states or a random recipe over classes.
    """

    states: List[StateSpec] = Field(default_factory=list)
    classes: List[str] = Field(default_factory=list)
    per_class: int = Field(default=10, ge=1)
    cutoff: int = Field(default=32, ge=5)
    data: DataSpec = Field(default_factory=DataSpec)
    noise: List[NoiseSpec] = Field(default_factory=list)
    mix_sigma_max: float = Field(default=0.5, ge=0.0, le=0.5)
    mix_density: float = Field(default=0.8, gt=0.0, le=1.0)
    seed: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def validate_source(self) -> "DatasetConfig":
        if not self.states and not self.classes:
            raise ValueError("a dataset needs 'states' or 'classes'")
        allowed = set(STATE_FAMILIES) - {"random"}
        unknown = [name for name in self.classes if name not in allowed]
        if unknown:
            raise ValueError(f"unknown classes {unknown}")
        return self


BenchmarkScenario = Literal["loss-compare", "additive-noise", "conv-noise", "mixed-rank", "data-reduction"]


class BenchmarkConfig(StrictModel):
    """Sizes of a benchmark scenario; defaults are desk scale."""

    scenario: BenchmarkScenario = "loss-compare"
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    cutoff: int = Field(default=16, ge=4)
    grid_points: int = Field(default=16, ge=2)
    max_iters: int = Field(default=1000, ge=1)
    sigma_G: float = Field(default=0.05, ge=0.0)
    n_th: float = Field(default=5.0, gt=0.0)
    lambda_l1: float = Field(default=1.0, ge=0.0)
    point_counts: List[int] = Field(default_factory=lambda: [32, 64, 128, 256, 512, 1024])


class RunConfig(StrictModel):
    """Top-level ``--config`` document; each command reads its own section."""

    seed: Optional[int] = Field(default=None, ge=0)
    cutoff: Optional[int] = Field(default=None, ge=2)
    dataset: Optional[DatasetConfig] = None
    classifier: Optional[ClassifierConfig] = None
    reconstruction: Optional[ReconstructionConfig] = None
    benchmark: Optional[BenchmarkConfig] = None
