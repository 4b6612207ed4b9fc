"""
Phase-space grids, measurement operators and quasi-probability data.

Square grids are row-major with the imaginary part as the outer index
and the real part as the inner index, so a flattened data vector maps
back onto an ``(ny, nx)`` image with ``values.reshape(ny, nx)``.
"""
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Optional

import numpy as np
import numpy.typing as npt

from src.core.config import get_settings
from src.core.exceptions import (
    DegenerateException,
    InvalidArgumentException,
    InvalidObservableException,
    UnknownKindException,
)
from src.physics.fock import (
    DensityMatrix,
    check_dim,
    displacement,
    embed,
    parity,
)

DEFAULT_EXTENT = (-5.0, 5.0)
DEFAULT_POINTS = 32


class GridLayout(str, Enum):
    """Enum for phase-space grid layouts."""
    SQUARE = "square"
    SCATTER = "scatter"


class MeasurementKind(str, Enum):
    """Enum for measurement-operator families."""
    HUSIMI_PROJECTOR = "husimi_projector"
    GENERALIZED_Q = "generalized_q"
    DISPLACED_PARITY = "displaced_parity"


class Normalization(str, Enum):
    """Enum for data-vector scaling bookkeeping."""
    RAW = "raw"
    UNIT_MAX = "unit_max"


@dataclass(frozen=True, eq=False)
class PhaseGrid:
    """Ordered phase-space points ``beta`` with their layout."""

    points: npt.NDArray[np.complex128]
    layout: GridLayout
    shape: Optional[tuple[int, int]] = None  # (ny, nx) for square grids
    extent: tuple[float, float] = DEFAULT_EXTENT

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def spacing(self) -> tuple[float, float]:
        """(dx, dy) of a square grid."""
        if self.layout is not GridLayout.SQUARE or self.shape is None:
            raise InvalidArgumentException("grid spacing is only defined for square grids")
        ny, nx = self.shape
        lo, hi = self.extent
        return (hi - lo) / (nx - 1), (hi - lo) / (ny - 1)

    @property
    def cell_area(self) -> float:
        dx, dy = self.spacing
        return dx * dy

    def subset(self, indices: npt.ArrayLike) -> "PhaseGrid":
        """Scatter grid made of a subset of the points."""
        return PhaseGrid(
            points=self.points[np.asarray(indices)],
            layout=GridLayout.SCATTER,
            extent=self.extent,
        )


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Measurement operators aligned with the points of a grid."""

    kind: MeasurementKind
    operators: npt.NDArray[np.complex128]  # (n, cutoff, cutoff)
    grid: PhaseGrid
    cutoff: int
    photon_number: int = 0
    scale: float = 1.0

    def __len__(self) -> int:
        return int(self.operators.shape[0])

    def scaled(self, factor: float) -> "MeasurementSet":
        """The same set with every operator multiplied by ``factor``."""
        return replace(self, operators=self.operators * factor, scale=self.scale * factor)


@dataclass(frozen=True, eq=False)
class DataVector:
    """Observed or generated statistics aligned with grid points."""

    values: npt.NDArray[np.float64]
    grid: Optional[PhaseGrid] = None
    normalization: Normalization = Normalization.RAW
    max_value: Optional[float] = None
    metadata: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return int(self.values.shape[0])

    def as_image(self) -> npt.NDArray[np.float64]:
        """Reshape square-grid data into an ``(ny, nx)`` array."""
        if self.grid is None or self.grid.layout is not GridLayout.SQUARE:
            raise InvalidArgumentException("only square-grid data can be viewed as an image")
        return self.values.reshape(self.grid.shape)


# =============================================================================
# Grids
# =============================================================================

def make_square_grid(
    extent: tuple[float, float] = DEFAULT_EXTENT,
    nx: int = DEFAULT_POINTS,
    ny: int = DEFAULT_POINTS,
) -> PhaseGrid:
    """
    Evenly spaced square grid, endpoints included.

    Raises:
        InvalidArgumentException: If the grid has fewer than two points per axis or an empty extent
    """
    lo, hi = float(extent[0]), float(extent[1])
    if nx < 2 or ny < 2 or not hi > lo:
        raise InvalidArgumentException(f"degenerate grid extent={extent}, nx={nx}, ny={ny}")
    re_axis = np.linspace(lo, hi, nx)
    im_axis = np.linspace(lo, hi, ny)
    re_mesh, im_mesh = np.meshgrid(re_axis, im_axis, indexing="xy")
    points = (re_mesh + 1j * im_mesh).ravel()
    return PhaseGrid(points=points, layout=GridLayout.SQUARE, shape=(ny, nx), extent=(lo, hi))


def sample_scatter(k: int, seed: int, radius: float = 5.0) -> PhaseGrid:
    """
    ``k`` i.i.d. points uniform in the disk ``|beta| <= radius``.

    Drawn by rejection from the bounding square.
    """
    if k < 1 or not radius > 0:
        raise InvalidArgumentException(f"scatter sampling needs k >= 1 and radius > 0, got k={k}, radius={radius}")
    rng = np.random.default_rng(seed)
    accepted: list[npt.NDArray[np.complex128]] = []
    count = 0
    while count < k:
        batch = 2 * (k - count) + 16
        candidates = rng.uniform(-radius, radius, size=(batch, 2))
        candidates = candidates[:, 0] + 1j * candidates[:, 1]
        candidates = candidates[np.abs(candidates) <= radius]
        accepted.append(candidates)
        count += candidates.shape[0]
    points = np.concatenate(accepted)[:k]
    return PhaseGrid(points=points, layout=GridLayout.SCATTER, extent=(-radius, radius))


# =============================================================================
# Operators
# =============================================================================

@lru_cache(maxsize=64)
def _displaced_fock_columns(points_key: bytes, photon_number: int, dim: int) -> npt.NDArray[np.complex128]:
    points = np.frombuffer(points_key, dtype=np.complex128)
    columns = np.empty((points.shape[0], dim), dtype=np.complex128)
    for index, beta in enumerate(points):
        columns[index] = displacement(beta, dim)[:, photon_number]
    columns.setflags(write=False)
    return columns


def displaced_fock_columns(grid: PhaseGrid, photon_number: int, dim: int) -> npt.NDArray[np.complex128]:
    """Rows ``D(beta)|n>`` for every grid point, shape ``(len(grid), dim)``."""
    check_dim(dim)
    if not 0 <= photon_number < dim:
        raise InvalidArgumentException(f"photon number {photon_number} must lie below dimension {dim}")
    key = np.ascontiguousarray(grid.points, dtype=np.complex128).tobytes()
    return _displaced_fock_columns(key, int(photon_number), int(dim))


def build_operators(
    grid: PhaseGrid,
    kind: MeasurementKind | str,
    cutoff: int,
    photon_number: int = 0,
    pad_factor: Optional[int] = None,
) -> MeasurementSet:
    """
    One Hermitian measurement operator per grid point.

    ``husimi_projector`` and ``generalized_q`` build ``D(beta)|n><n|D(beta)^dagger``
    (Husimi is the n = 0 case); ``displaced_parity`` builds ``D(beta) P D(beta)^dagger``.
    Displacements are computed at ``pad_factor`` times the cutoff and the
    operators compressed back onto the first ``cutoff`` levels, so
    ``tr(O rho)`` matches `generalized_q` and `wigner` at their default padding.

    Raises:
        UnknownKindException: If ``kind`` is not a known measurement family
    """
    try:
        kind = MeasurementKind(kind)
    except ValueError as exc:
        raise UnknownKindException("measurement kind", str(kind)) from exc
    check_dim(cutoff)
    settings = get_settings()

    if kind is MeasurementKind.DISPLACED_PARITY:
        dim = cutoff * (pad_factor or settings.WIGNER_PAD_FACTOR)
        parity_matrix = parity(dim)
        operators = np.empty((len(grid), cutoff, cutoff), dtype=np.complex128)
        for index, beta in enumerate(grid.points):
            shift = displacement(beta, dim)[:cutoff]
            operators[index] = shift @ parity_matrix @ shift.conj().T
        photon_number = 0
    else:
        if kind is MeasurementKind.HUSIMI_PROJECTOR:
            photon_number = 0
        dim = cutoff * (pad_factor or settings.HUSIMI_PAD_FACTOR)
        columns = displaced_fock_columns(grid, photon_number, dim)[:, :cutoff]
        operators = np.einsum("ka,kb->kab", columns, columns.conj())

    operators = 0.5 * (operators + np.conj(np.swapaxes(operators, 1, 2)))
    return MeasurementSet(kind=kind, operators=operators, grid=grid, cutoff=cutoff, photon_number=photon_number)


def husimi_operators(grid: PhaseGrid, cutoff: int) -> MeasurementSet:
    """Husimi projectors carrying the ``1/pi`` factor, so expectations equal Q values."""
    return build_operators(grid, MeasurementKind.HUSIMI_PROJECTOR, cutoff).scaled(1.0 / math.pi)


def wigner_operators(grid: PhaseGrid, cutoff: int) -> MeasurementSet:
    """Displaced parity operators carrying the ``2/pi`` factor, so expectations equal W values."""
    return build_operators(grid, MeasurementKind.DISPLACED_PARITY, cutoff).scaled(2.0 / math.pi)


def expectations(rho: DensityMatrix, measurements: MeasurementSet) -> npt.NDArray[np.float64]:
    """
    ``Re tr(O_i rho)`` for every operator of a set.

    Raises:
        InvalidObservableException: If the state and operator dimensions differ
    """
    rho = np.asarray(rho)
    if rho.shape != measurements.operators.shape[1:]:
        raise InvalidObservableException(
            f"state shape {rho.shape} does not match operator shape {measurements.operators.shape[1:]}"
        )
    return np.einsum("kab,ba->k", measurements.operators, rho).real


# =============================================================================
# Data generation
# =============================================================================

def _padded(rho: DensityMatrix, dim: Optional[int], pad_factor: int) -> DensityMatrix:
    rho = np.asarray(rho, dtype=np.complex128)
    target = dim if dim is not None else rho.shape[0] * pad_factor
    return embed(rho, max(target, rho.shape[0]))


def generalized_q(
    rho: DensityMatrix,
    grid: PhaseGrid,
    photon_number: int,
    cutoff_pad: Optional[int] = None,
) -> DataVector:
    """
    Generalized Q values ``Q_n(beta) = <n|D(-beta) rho D(-beta)^dagger|n>``.

    The state is embedded into ``cutoff_pad`` levels (default: the cutoff
    times ``HUSIMI_PAD_FACTOR``) before displacement. Values are clipped
    into [0, 1].
    """
    rho = _padded(rho, cutoff_pad, get_settings().HUSIMI_PAD_FACTOR)
    dim = rho.shape[0]
    columns = displaced_fock_columns(grid, photon_number, dim)
    values = np.einsum("ka,ab,kb->k", columns.conj(), rho, columns).real
    return DataVector(values=np.clip(values, 0.0, 1.0), grid=grid)


def husimi(rho: DensityMatrix, grid: PhaseGrid, pad_factor: Optional[int] = None) -> DataVector:
    """Husimi ``Q(beta) = Q_0(beta) / pi``, evaluated at a padded cutoff."""
    if pad_factor is None:
        pad_factor = get_settings().HUSIMI_PAD_FACTOR
    dim = np.asarray(rho).shape[0] * pad_factor
    q_values = generalized_q(rho, grid, 0, cutoff_pad=dim)
    return replace(q_values, values=q_values.values / math.pi)


def wigner(rho: DensityMatrix, grid: PhaseGrid, pad_factor: Optional[int] = None) -> DataVector:
    """
    Wigner ``W(beta) = (2/pi) tr[rho D(beta) P D(beta)^dagger]``.

    The state is embedded at ``pad_factor`` times its cutoff so that large
    displacements do not pick up truncation artefacts.
    """
    if pad_factor is None:
        pad_factor = get_settings().WIGNER_PAD_FACTOR
    rho = _padded(rho, None, pad_factor)
    dim = rho.shape[0]
    signs = (-1.0) ** np.arange(dim)
    values = np.empty(len(grid), dtype=np.float64)
    for index, beta in enumerate(grid.points):
        shift = displacement(beta, dim)
        displaced = shift.conj().T @ rho @ shift
        values[index] = float(np.dot(signs, np.diag(displaced).real))
    return DataVector(values=(2.0 / math.pi) * values, grid=grid)


# =============================================================================
# Normalization
# =============================================================================

def normalize_unit_max(data: DataVector) -> DataVector:
    """
    Divide by the maximum value, recording the factor for inversion.

    Raises:
        DegenerateException: If the maximum is not positive
    """
    peak = float(np.max(data.values)) if len(data) else 0.0
    if not peak > 0:
        raise DegenerateException("degenerate-normalization", "data has no positive value to normalize by")
    previous = data.max_value if data.normalization is Normalization.UNIT_MAX and data.max_value else 1.0
    return replace(
        data,
        values=data.values / peak,
        normalization=Normalization.UNIT_MAX,
        max_value=peak * previous,
    )


def denormalize(data: DataVector) -> DataVector:
    """Undo `normalize_unit_max`."""
    if data.normalization is not Normalization.UNIT_MAX or data.max_value is None:
        return data
    return replace(
        data,
        values=data.values * data.max_value,
        normalization=Normalization.RAW,
        max_value=None,
    )
