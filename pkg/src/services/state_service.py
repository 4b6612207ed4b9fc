"""
Turn validated specs into physics objects: states, grids, operators, data and noise.
"""
from dataclasses import replace
from typing import Sequence, Union

import numpy as np

from src.core.exceptions import InvalidArgumentException, UnknownKindException
from src.physics import measure, noise, states
from src.physics.fock import DensityMatrix, validate_density_matrix
from src.physics.measure import DataVector, GridLayout, MeasurementKind, MeasurementSet, PhaseGrid
from src.schemas.measurement_schema import DataSpec, GridSpec, MeasurementSpec
from src.schemas.noise_schema import (
    AdditiveGaussianSpec,
    AffineSpec,
    GaussianConvSpec,
    MixRandomSpec,
    NoiseSpec,
    PepperSpec,
    PhotonLossSpec,
)
from src.schemas.state_schema import (
    BinomialSpec,
    CatSpec,
    CoherentSpec,
    FockSpec,
    GkpSpec,
    NumSpec,
    RandomSpec,
    StateSpec,
    ThermalSpec,
)


def build_state(spec: StateSpec) -> DensityMatrix:
    """Construct the density matrix a state spec describes."""
    if isinstance(spec, FockSpec):
        rho = states.make_fock(spec.n, spec.cutoff)
    elif isinstance(spec, CoherentSpec):
        rho = states.make_coherent(spec.alpha, spec.cutoff)
    elif isinstance(spec, ThermalSpec):
        rho = states.make_thermal(spec.n_th, spec.cutoff)
    elif isinstance(spec, NumSpec):
        rho = states.make_num_1562(spec.mu, spec.cutoff)
    elif isinstance(spec, BinomialSpec):
        rho = states.make_binomial(spec.S, spec.N, spec.mu, spec.cutoff)
    elif isinstance(spec, CatSpec):
        rho = states.make_cat(spec.alpha, spec.S, spec.mu, spec.cutoff)
    elif isinstance(spec, GkpSpec):
        rho = states.make_gkp_finite(spec.Delta, spec.mu, spec.cutoff, grid_extent=spec.grid_extent)
    elif isinstance(spec, RandomSpec):
        rho = states.make_random_density(spec.density, spec.cutoff, spec.seed)
    else:
        raise UnknownKindException("state family", getattr(spec, "family", type(spec).__name__))
    return validate_density_matrix(rho, spec.family)


def build_grid(spec: GridSpec) -> PhaseGrid:
    if spec.layout is GridLayout.SQUARE:
        return measure.make_square_grid(spec.extent, spec.nx, spec.ny)
    return measure.sample_scatter(spec.points, spec.seed, radius=spec.radius)


def build_measurements(spec: MeasurementSpec) -> MeasurementSet:
    """Operators for a measurement spec, scaled to match the recorded data when requested."""
    return measurements_on(build_grid(spec.grid), spec.kind, spec.cutoff, spec.photon_number, spec.scaled)


def measurements_on(
    grid: PhaseGrid,
    kind: MeasurementKind,
    cutoff: int,
    photon_number: int = 0,
    scaled: bool = True,
) -> MeasurementSet:
    """Operators on an existing grid, e.g. the points read from a data file."""
    ops = measure.build_operators(grid, kind, cutoff, photon_number)
    if not scaled:
        return ops
    if ops.kind is MeasurementKind.HUSIMI_PROJECTOR:
        return ops.scaled(1.0 / np.pi)
    if ops.kind is MeasurementKind.DISPLACED_PARITY:
        return ops.scaled(2.0 / np.pi)
    return ops


def measurement_spec_for(data: DataSpec, cutoff: int) -> MeasurementSpec:
    """Measurement spec whose operator expectations reproduce ``data`` before normalization."""
    kinds = {
        "husimi": MeasurementKind.HUSIMI_PROJECTOR,
        "wigner": MeasurementKind.DISPLACED_PARITY,
        "generalized_q": MeasurementKind.GENERALIZED_Q,
    }
    return MeasurementSpec(kind=kinds[data.function], photon_number=data.photon_number, grid=data.grid, cutoff=cutoff)


def record_data(rho: DensityMatrix, spec: DataSpec, grid: PhaseGrid | None = None) -> DataVector:
    """Evaluate the requested quasi-probability on the grid and optionally unit-max normalize it."""
    grid = grid if grid is not None else build_grid(spec.grid)
    if spec.function == "husimi":
        data = measure.husimi(rho, grid)
    elif spec.function == "wigner":
        data = measure.wigner(rho, grid)
    else:
        if spec.photon_number >= rho.shape[0]:
            raise InvalidArgumentException(f"photon number {spec.photon_number} must be below cutoff {rho.shape[0]}")
        data = measure.generalized_q(rho, grid, spec.photon_number)
    return measure.normalize_unit_max(data) if spec.unit_max else data


# =============================================================================
# Noise
# =============================================================================

def apply_state_noise(rho: DensityMatrix, specs: Sequence[NoiseSpec]) -> DensityMatrix:
    """Apply the state-level channels of a noise list in order, skipping data-level ones."""
    for spec in specs:
        if isinstance(spec, MixRandomSpec):
            rho = noise.mix_random(rho, spec.sigma, spec.density, spec.seed)
        elif isinstance(spec, PhotonLossSpec):
            rho = noise.photon_loss(rho, spec.fraction)
    return rho


def apply_data_noise(data: DataVector, specs: Sequence[NoiseSpec]) -> DataVector:
    """Apply the data-level channels of a noise list in order, skipping state-level ones."""
    for spec in specs:
        if spec.acts_on_state:
            continue
        if isinstance(spec, GaussianConvSpec):
            data = noise.gaussian_convolve(data, spec.n_th)
        elif isinstance(spec, AffineSpec):
            params = None if spec.seed is not None else noise.AffineParams(
                theta=spec.theta,
                shear=spec.shear,
                shift_x=spec.shift_x,
                shift_p=spec.shift_p,
                zoom_x=spec.zoom_x,
                zoom_p=spec.zoom_p,
                flip_horizontal=spec.flip_horizontal,
                flip_vertical=spec.flip_vertical,
            )
            image = noise.affine_augment(data.as_image(), params=params, seed=spec.seed)
            data = replace(data, values=image.ravel())
        elif isinstance(spec, AdditiveGaussianSpec):
            data = noise.additive_gaussian(data, spec.sigma_G, spec.seed)
        elif isinstance(spec, PepperSpec):
            data = noise.pepper(data, spec.fraction, spec.seed)
        else:
            raise UnknownKindException("noise kind", spec.kind)
    return data


def apply_noise(target: Union[DensityMatrix, DataVector], specs: Sequence[NoiseSpec]):
    """Dispatch on the target: states get state channels, data gets data channels."""
    if isinstance(target, DataVector):
        return apply_data_noise(target, specs)
    return apply_state_noise(np.asarray(target, dtype=np.complex128), specs)
