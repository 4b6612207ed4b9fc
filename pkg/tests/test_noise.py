import math

import numpy as np
import pytest

from oracles import lindblad_loss
from src.core.exceptions import InvalidArgumentException, OutOfRangeException
from src.physics.fock import fidelity, root_fidelity, trace_distance, validate_density_matrix
from src.physics.measure import DataVector, make_square_grid, sample_scatter
from src.physics.noise import (
    AffineParams,
    additive_gaussian,
    affine_augment,
    affine_matrix,
    gaussian_convolve,
    gaussian_kernel,
    loss_kraus_operators,
    mix_random,
    pepper,
    photon_loss,
)
from src.physics.states import (
    make_cat,
    make_coherent,
    make_fock,
    make_random_density,
    make_thermal,
    mean_photon,
)


# =============================================================================
# State channels
# =============================================================================

def test_mix_random_zero_is_identity():
    rho = make_cat(2.0, 0, 0, 16)
    np.testing.assert_array_equal(mix_random(rho, 0.0, 1.0, seed=1), rho)


def test_mix_random_keeps_states_physical():
    rho = make_fock(2, 8)
    for seed in range(20):
        mixed = mix_random(rho, 0.5, 0.8, seed)
        validate_density_matrix(mixed)
        assert fidelity(mixed, rho) >= 0.5 - 1e-9


def test_mix_random_sigma_range():
    with pytest.raises(OutOfRangeException):
        mix_random(make_fock(0, 4), 0.6, 1.0, seed=0)


def test_kraus_operators_are_complete():
    kraus = loss_kraus_operators(0.3, 10)
    total = np.einsum("kba,kbc->ac", kraus.conj(), kraus)
    np.testing.assert_allclose(total, np.eye(10), atol=1e-12)


def test_photon_loss_identity_and_full_loss():
    rho = make_random_density(1.0, 8, seed=5)
    np.testing.assert_array_equal(photon_loss(rho, 0.0), rho)
    np.testing.assert_allclose(photon_loss(rho, 1.0), make_fock(0, 8), atol=1e-12)


def test_photon_loss_scales_mean_photon_number():
    for rho in (make_thermal(1.5, 16), make_coherent(1 + 1j, 16), make_fock(5, 16)):
        lossy = photon_loss(rho, 0.35)
        assert mean_photon(lossy) == pytest.approx(0.65 * mean_photon(rho), abs=1e-10)


def test_lossy_coherent_state_stays_coherent():
    lossy = photon_loss(make_coherent(2.0, 32), 0.5)
    assert fidelity(lossy, make_coherent(2.0 * math.sqrt(0.5), 32)) > 1 - 1e-6


@pytest.mark.parametrize(("fraction", "overlap"), [(0.2, 0.76), (1.0, 0.19)])
def test_lossy_cat_overlap(fraction, overlap):
    cat = make_cat(2.0, 0, 0, 32)
    assert root_fidelity(photon_loss(cat, fraction), cat) == pytest.approx(overlap, abs=0.02)


def test_photon_loss_composes():
    rho = make_random_density(1.0, 8, seed=1)
    twice = photon_loss(photon_loss(rho, 0.2), 0.3)
    once = photon_loss(rho, 1 - 0.8 * 0.7)
    assert trace_distance(twice, once) < 1e-12


def test_photon_loss_matches_master_equation():
    for seed in range(3):
        rho = make_random_density(1.0, 8, seed=seed)
        assert trace_distance(photon_loss(rho, 0.4), lindblad_loss(rho, 0.4)) < 1e-6


# =============================================================================
# Gaussian convolution
# =============================================================================

def square_data(image: np.ndarray, extent=(-5.0, 5.0)) -> DataVector:
    ny, nx = image.shape
    return DataVector(values=image.ravel().astype(np.float64), grid=make_square_grid(extent, nx, ny))


def test_kernel_has_unit_mass_and_centre_peak():
    kernel = gaussian_kernel(0.8, (0.3, 0.3))
    assert kernel.sum() == pytest.approx(1.0)
    assert kernel.shape[0] % 2 == 1 and kernel.shape[1] % 2 == 1
    centre = tuple(s // 2 for s in kernel.shape)
    assert kernel[centre] == kernel.max()


def test_tiny_variance_is_identity():
    image = np.random.default_rng(0).random((9, 9))
    out = gaussian_convolve(square_data(image), 1e-4)
    np.testing.assert_allclose(out.values, image.ravel(), atol=1e-6)


def test_delta_spreads_into_the_kernel_and_keeps_mass():
    image = np.zeros((41, 41))
    image[20, 20] = 1.0
    data = square_data(image)
    out = gaussian_convolve(data, 0.5)
    kernel = gaussian_kernel(0.5, data.grid.spacing)
    hy, hx = kernel.shape[0] // 2, kernel.shape[1] // 2
    np.testing.assert_allclose(out.as_image()[20 - hy:21 + hy, 20 - hx:21 + hx], kernel, atol=1e-15)
    assert out.values.sum() == pytest.approx(1.0, abs=1e-10)


def test_convolved_vacuum_husimi_broadens_analytically():
    grid = make_square_grid((-5, 5), 41, 41)
    beta2 = np.abs(grid.points) ** 2
    data = DataVector(values=np.exp(-beta2) / math.pi, grid=grid)
    out = gaussian_convolve(data, 3.0)
    np.testing.assert_allclose(out.values, np.exp(-beta2 / 4) / (4 * math.pi), atol=2e-3)
    assert out.as_image()[20, 20] == pytest.approx(1 / (4 * math.pi), abs=2e-3)


def test_convolution_is_linear_and_positive():
    rng = np.random.default_rng(4)
    first, second = rng.random((16, 16)), rng.random((16, 16))
    combined = gaussian_convolve(square_data(2 * first + 3 * second), 0.7).values
    separate = 2 * gaussian_convolve(square_data(first), 0.7).values + 3 * gaussian_convolve(square_data(second), 0.7).values
    np.testing.assert_allclose(combined, separate, atol=1e-12)
    assert np.all(combined >= 0)


def test_convolution_needs_square_grid():
    data = DataVector(values=np.ones(10), grid=sample_scatter(10, seed=0))
    with pytest.raises(InvalidArgumentException):
        gaussian_convolve(data, 1.0)


# =============================================================================
# Affine augmentation
# =============================================================================

def test_identity_params_leave_image_unchanged():
    image = np.random.default_rng(1).random((12, 12))
    np.testing.assert_allclose(affine_augment(image, AffineParams()), image, atol=1e-12)


def test_half_turn_rotation_reverses_both_axes():
    image = np.random.default_rng(2).random((10, 10))
    np.testing.assert_allclose(affine_augment(image, AffineParams(theta=180.0)), image[::-1, ::-1], atol=1e-10)


def test_right_angle_matrix_is_exact():
    matrix = affine_matrix(AffineParams(theta=90.0))
    np.testing.assert_array_equal(np.abs(matrix), [[0, 1], [1, 0]])


def test_flips():
    image = np.arange(16.0).reshape(4, 4)
    np.testing.assert_allclose(affine_augment(image, AffineParams(flip_horizontal=True)), image[:, ::-1], atol=1e-12)
    np.testing.assert_allclose(affine_augment(image, AffineParams(flip_vertical=True)), image[::-1], atol=1e-12)


def test_seeded_augmentation_is_deterministic():
    image = np.random.default_rng(3).random((16, 16))
    np.testing.assert_array_equal(affine_augment(image, seed=7), affine_augment(image, seed=7))


def test_affine_needs_square_image_and_params():
    with pytest.raises(InvalidArgumentException):
        affine_augment(np.zeros((4, 5)), AffineParams())
    with pytest.raises(InvalidArgumentException):
        affine_augment(np.zeros((4, 4)))


# =============================================================================
# Additive and pepper noise
# =============================================================================

def test_additive_gaussian_statistics():
    data = DataVector(values=np.zeros(1_000_000))
    noisy = additive_gaussian(data, 0.1, seed=0).values
    assert noisy.mean() == pytest.approx(0.0, abs=5e-3)
    assert noisy.std() == pytest.approx(0.1, rel=0.01)
    assert noisy.min() < 0


def test_additive_gaussian_zero_sigma_is_identity():
    data = DataVector(values=np.linspace(0, 1, 5))
    np.testing.assert_array_equal(additive_gaussian(data, 0.0, seed=0).values, data.values)


def test_pepper_counts():
    data = DataVector(values=np.linspace(0.1, 1.0, 1024))
    assert np.count_nonzero(pepper(data, 0.5, seed=1).values == 0) == 512
    np.testing.assert_array_equal(pepper(data, 0.0, seed=1).values, data.values)
    assert np.all(pepper(data, 1.0, seed=1).values == 0)


def test_pepper_fraction_range():
    with pytest.raises(OutOfRangeException):
        pepper(DataVector(values=np.ones(4)), 1.5, seed=0)
