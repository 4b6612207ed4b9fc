"""
Corruption channels for states and phase-space data.

State-level channels (`mix_random`, `photon_loss`) return density matrices.
Data-level channels act on `DataVector` values or 2D images and are pure
functions of their explicit seed.
"""
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
import numpy.typing as npt
from scipy import ndimage, signal
from scipy.special import comb

from src.core.exceptions import InvalidArgumentException, OutOfRangeException
from src.physics.fock import DensityMatrix, check_dim
from src.physics.measure import DataVector, GridLayout
from src.physics.states import make_random_density

MAX_MIX_SIGMA = 0.5
# exp(-37) is below double-precision resolution relative to the kernel peak
KERNEL_CUTOFF_EXPONENT = 37.0


# =============================================================================
# State channels
# =============================================================================

def mix_random(rho: DensityMatrix, sigma: float, density: float, seed: int) -> DensityMatrix:
    """
    Convex mixture ``(1 - sigma) rho + sigma rho_random``.

    Raises:
        OutOfRangeException: If sigma is outside [0, 0.5]
    """
    if not 0.0 <= sigma <= MAX_MIX_SIGMA:
        raise OutOfRangeException("sigma", sigma, f"[0, {MAX_MIX_SIGMA}]")
    rho = np.asarray(rho, dtype=np.complex128)
    if sigma == 0.0:
        return rho
    random_state = make_random_density(density, rho.shape[0], seed)
    return (1.0 - sigma) * rho + sigma * random_state


def loss_kraus_operators(loss_fraction: float, dim: int) -> npt.NDArray[np.complex128]:
    """
    Amplitude-damping Kraus operators ``A_k`` for transmissivity ``1 - loss_fraction``.

    ``<n-k|A_k|n> = sqrt(C(n, k)) eta^((n-k)/2) (1-eta)^(k/2)``.
    """
    check_dim(dim)
    if not 0.0 <= loss_fraction <= 1.0:
        raise OutOfRangeException("loss_fraction", loss_fraction, "[0, 1]")
    eta = 1.0 - loss_fraction
    operators = np.zeros((dim, dim, dim), dtype=np.complex128)
    for k in range(dim):
        for n in range(k, dim):
            operators[k, n - k, n] = (
                math.sqrt(comb(n, k, exact=True)) * eta ** ((n - k) / 2.0) * (1.0 - eta) ** (k / 2.0)
            )
    return operators


def photon_loss(rho: DensityMatrix, loss_fraction: float) -> DensityMatrix:
    """
    Lose a fraction of the photons through an amplitude-damping channel.

    The mean photon number scales by exactly ``1 - loss_fraction``; a
    fraction of 1 sends every state to vacuum.
    """
    rho = np.asarray(rho, dtype=np.complex128)
    if loss_fraction == 0.0:
        return rho
    kraus = loss_kraus_operators(loss_fraction, rho.shape[0])
    out = np.einsum("kab,bc,kdc->ad", kraus, rho, kraus.conj())
    return 0.5 * (out + out.conj().T)


# =============================================================================
# Data channels
# =============================================================================

def gaussian_kernel(n_th: float, spacing: tuple[float, float], max_half_width: Optional[tuple[int, int]] = None) -> npt.NDArray[np.float64]:
    """
    Sampled kernel ``exp(-|beta|^2 / n_th)`` on grid offsets, unit discrete mass.

    The kernel has odd extents and its peak at the centre. Offsets where the
    kernel falls below ``exp(-37)`` of the peak are cropped.

    Args:
        n_th: Thermal variance of the kernel
        spacing: (dx, dy) grid spacing
        max_half_width: Optional (hx, hy) cap on the half-widths in samples
    """
    if not n_th > 0:
        raise InvalidArgumentException(f"convolution variance n_th must be positive, got {n_th}")
    dx, dy = spacing
    radius = math.sqrt(KERNEL_CUTOFF_EXPONENT * n_th)
    hx = int(math.ceil(radius / dx))
    hy = int(math.ceil(radius / dy))
    if max_half_width is not None:
        hx = min(hx, max_half_width[0])
        hy = min(hy, max_half_width[1])
    x_offsets = dx * np.arange(-hx, hx + 1)
    y_offsets = dy * np.arange(-hy, hy + 1)
    kernel = np.exp(-(y_offsets[:, None] ** 2 + x_offsets[None, :] ** 2) / n_th)
    return kernel / kernel.sum()


def convolve_image(image: npt.NDArray[np.float64], kernel: npt.NDArray[np.float64]) -> npt.NDArray[np.float64]:
    """Zero-padded 'same' convolution of an image with an odd kernel."""
    return signal.convolve2d(image, kernel, mode="same", boundary="fill", fillvalue=0.0)


def gaussian_convolve(data: DataVector, n_th: float) -> DataVector:
    """
    Convolve square-grid data with the thermal kernel of variance ``n_th``.

    Raises:
        InvalidArgumentException: If the data does not live on a square grid
    """
    grid = data.grid
    if grid is None or grid.layout is not GridLayout.SQUARE:
        raise InvalidArgumentException("gaussian convolution needs data on a square grid")
    ny, nx = grid.shape
    kernel = gaussian_kernel(n_th, grid.spacing, max_half_width=(nx - 1, ny - 1))
    image = convolve_image(data.as_image(), kernel)
    return replace(data, values=image.ravel())


def additive_gaussian(data: DataVector, sigma_G: float, seed: int) -> DataVector:
    """Add zero-mean Gaussian noise of standard deviation ``sigma_G``; no clipping."""
    if not sigma_G >= 0:
        raise OutOfRangeException("sigma_G", sigma_G, "[0, inf)")
    if sigma_G == 0:
        return data
    rng = np.random.default_rng(seed)
    return replace(data, values=data.values + rng.normal(0.0, sigma_G, size=len(data)))


def pepper(data: DataVector, fraction: float, seed: int) -> DataVector:
    """Zero ``round(fraction * len)`` distinct positions, uniformly without replacement."""
    if not 0.0 <= fraction <= 1.0:
        raise OutOfRangeException("fraction", fraction, "[0, 1]")
    count = int(np.rint(fraction * len(data)))
    if count == 0:
        return data
    rng = np.random.default_rng(seed)
    positions = rng.choice(len(data), size=count, replace=False)
    values = data.values.copy()
    values[positions] = 0.0
    return replace(data, values=values)


# =============================================================================
# Affine augmentation
# =============================================================================

@dataclass(frozen=True)
class AffineParams:
    """
    One affine map of phase space.

    Angles are in degrees, shifts are fractions of the image size, and
    zooms scale the x (column) and p (row) axes.
    """

    theta: float = 0.0
    shear: float = 0.0
    shift_x: float = 0.0
    shift_p: float = 0.0
    zoom_x: float = 1.0
    zoom_p: float = 1.0
    flip_horizontal: bool = False
    flip_vertical: bool = False


@dataclass(frozen=True)
class AffineRanges:
    """Sampling ranges for random augmentation."""

    theta: tuple[float, float] = (0.0, 180.0)
    shear: tuple[float, float] = (0.0, 5.0)
    shift: float = 0.2
    zoom: tuple[float, float] = (0.8, 1.2)
    flips: bool = True

    def sample(self, rng: np.random.Generator) -> AffineParams:
        return AffineParams(
            theta=float(rng.uniform(*self.theta)),
            shear=float(rng.uniform(*self.shear)),
            shift_x=float(rng.uniform(-self.shift, self.shift)),
            shift_p=float(rng.uniform(-self.shift, self.shift)),
            zoom_x=float(rng.uniform(*self.zoom)),
            zoom_p=float(rng.uniform(*self.zoom)),
            flip_horizontal=bool(self.flips and rng.random() < 0.5),
            flip_vertical=bool(self.flips and rng.random() < 0.5),
        )


def affine_matrix(params: AffineParams) -> npt.NDArray[np.float64]:
    """
    Forward map in array (row, col) = (p, x) order.

    In (x, p) order the map is
    ``[[s_x cos t, -s_p sin(t + O)], [s_x sin t, s_p cos(t + O)]]``.
    """
    theta = math.radians(params.theta)
    shear = math.radians(params.shear)
    xp = np.array([
        [params.zoom_x * math.cos(theta), -params.zoom_p * math.sin(theta + shear)],
        [params.zoom_x * math.sin(theta), params.zoom_p * math.cos(theta + shear)],
    ])
    # rounding keeps right-angle rotations exact
    return np.round(xp[::-1, ::-1], 12)


def affine_augment(
    image: npt.NDArray[np.float64],
    params: Optional[AffineParams] = None,
    seed: Optional[int] = None,
    ranges: AffineRanges = AffineRanges(),
) -> npt.NDArray[np.float64]:
    """
    Resample a square image under an affine map about its centre.

    Bilinear interpolation; pixels mapped from outside the image are 0.
    Either ``params`` or ``seed`` (sampling from ``ranges``) is required.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] != image.shape[1]:
        raise InvalidArgumentException(f"affine augmentation needs a square image, got {image.shape}")
    if params is None:
        if seed is None:
            raise InvalidArgumentException("affine augmentation needs params or a seed")
        params = ranges.sample(np.random.default_rng(seed))

    height, width = image.shape
    centre = np.array([(height - 1) / 2.0, (width - 1) / 2.0])
    shift = np.array([params.shift_p * height, params.shift_x * width])
    forward = affine_matrix(params)
    inverse = np.linalg.inv(forward)
    offset = centre - inverse @ (centre + shift)
    out = ndimage.affine_transform(image, inverse, offset=offset, order=1, mode="constant", cval=0.0)

    if params.flip_horizontal:
        out = np.flip(out, axis=1)
    if params.flip_vertical:
        out = np.flip(out, axis=0)
    return np.ascontiguousarray(out)
