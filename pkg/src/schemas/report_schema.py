from pydantic import BaseModel, ConfigDict, Field
from typing import Dict, List, Optional

from src.schemas.measurement_schema import DataSpec, GridSpec
from src.schemas.noise_schema import NoiseSpec
from src.schemas.state_schema import DensityMatrixPayload, StateSpec


# =============================================================================
# Reconstruction
# =============================================================================

class FitReport(BaseModel):
    """Outcome of one reconstruction fit, with full traces for plotting."""

    method: str
    iterations: int = Field(..., ge=0)
    stop_reason: str
    fidelity_trace: List[float] = Field(default_factory=list)
    loss_traces: Dict[str, List[float]] = Field(default_factory=dict)
    flags: List[str] = Field(default_factory=list)
    final_fidelity: Optional[float] = None
    final_state: DensityMatrixPayload


# =============================================================================
# Classifier
# =============================================================================

class TrainingHistory(BaseModel):
    """Per-epoch classifier training metrics."""

    loss: List[float] = Field(default_factory=list)
    accuracy: List[float] = Field(default_factory=list)


class EvaluationReport(BaseModel):
    """Confusion matrix (rows normalized per true label), accuracy and ROC-AUC."""

    classes: List[str]
    confusion: List[List[float]]
    accuracy: float
    auc: List[Optional[float]]
    macro_auc: Optional[float]


# =============================================================================
# Dataset manifest
# =============================================================================

class ManifestEntry(BaseModel):
    """One generated sample and everything needed to regenerate it."""

    model_config = ConfigDict(extra="forbid")

    state: StateSpec
    noise: List[NoiseSpec] = Field(default_factory=list)
    grid: GridSpec
    label: str
    seed: int
    path: str
    sha256: str


class Manifest(BaseModel):
    """Index of a generated dataset."""

    model_config = ConfigDict(extra="forbid")

    data: DataSpec
    seed: int
    entries: List[ManifestEntry] = Field(default_factory=list)

    def class_counts(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for entry in self.entries:
            counts[entry.label] = counts.get(entry.label, 0) + 1
        return counts


# =============================================================================
# Benchmarks
# =============================================================================

class MethodSummary(BaseModel):
    """Mean and one-standard-deviation band of a method's fidelity traces."""

    method: str
    case: str
    runs: int
    final_mean: float
    final_std: float
    mean_trace: List[float]
    std_trace: List[float]


class BenchmarkSummary(BaseModel):
    scenario: str
    seeds: List[int]
    methods: List[MethodSummary] = Field(default_factory=list)
