import math

import numpy as np
import pytest

from oracles import random_lower_factor, random_pure_ket
from src.core.exceptions import (
    DegenerateException,
    InvalidArgumentException,
    InvalidDimensionException,
    InvalidObservableException,
    InvalidStateException,
)
from src.physics.fock import (
    annihilation,
    creation,
    density_from_cholesky,
    displacement,
    embed,
    expectation,
    fidelity,
    ket_to_density,
    make_mixture,
    number_operator,
    parity,
    photon_distribution,
    purity,
    root_fidelity,
    trace_distance,
    validate_density_matrix,
)
from src.physics.states import make_coherent, make_fock, make_thermal


# =============================================================================
# Operators
# =============================================================================

def test_annihilation_lowers_one_photon():
    a = annihilation(3)
    e1 = np.array([0, 1, 0], dtype=complex)
    np.testing.assert_allclose(a @ e1, [1, 0, 0])


def test_annihilation_matrix_elements():
    a = annihilation(4)
    assert a[2, 3] == pytest.approx(math.sqrt(3))
    assert np.count_nonzero(a) == 3


def test_truncated_commutator_breaks_at_cutoff():
    dim = 8
    a, ad = annihilation(dim), creation(dim)
    expected = np.eye(dim)
    expected[-1, -1] = -(dim - 1)
    np.testing.assert_allclose(a @ ad - ad @ a, expected, atol=1e-12)


@pytest.mark.parametrize("dim", [0, 1])
def test_dimension_below_two_rejected(dim):
    with pytest.raises(InvalidDimensionException):
        annihilation(dim)


def test_number_operator_is_ad_a():
    dim = 6
    np.testing.assert_allclose(number_operator(dim), creation(dim) @ annihilation(dim), atol=1e-12)


def test_displacement_zero_is_identity():
    np.testing.assert_array_equal(displacement(0, 10), np.eye(10))


def test_displacement_vacuum_column_is_coherent():
    dim = 32
    column = displacement(1.0, dim)[:, 0]
    expected = [math.exp(-0.5) / math.sqrt(math.factorial(n)) for n in range(dim)]
    np.testing.assert_allclose(column, expected, atol=1e-8)


def test_displacement_inverse_and_unitarity():
    dim = 24
    alpha = 0.7 - 0.4j
    d = displacement(alpha, dim)
    np.testing.assert_allclose(d @ displacement(-alpha, dim), np.eye(dim), atol=1e-8)
    np.testing.assert_allclose(d @ d.conj().T, np.eye(dim), atol=1e-10)


def test_displacement_composition_phase():
    dim, block = 40, 12
    rng = np.random.default_rng(5)
    for _ in range(5):
        alpha, beta = (rng.uniform(-0.7, 0.7, 2) @ [1, 1j] for _ in range(2))
        lhs = displacement(alpha, dim) @ displacement(beta, dim)
        rhs = np.exp(1j * (alpha * np.conj(beta)).imag) * displacement(alpha + beta, dim)
        np.testing.assert_allclose(lhs[:block, :block], rhs[:block, :block], atol=1e-6)


@pytest.mark.parametrize("alpha", [complex("nan"), complex("inf"), complex(0, float("inf"))])
def test_displacement_rejects_non_finite(alpha):
    with pytest.raises(InvalidArgumentException):
        displacement(alpha, 8)


def test_parity_values():
    np.testing.assert_array_equal(parity(2), np.diag([1.0, -1.0]))
    assert expectation(make_fock(1, 4), parity(4)) == pytest.approx(-1.0)


def test_parity_of_coherent_state():
    assert expectation(make_coherent(1.0, 32), parity(32)) == pytest.approx(math.exp(-2), abs=1e-6)


# =============================================================================
# Cholesky parameterization
# =============================================================================

def test_identity_factor_gives_maximally_mixed():
    np.testing.assert_allclose(density_from_cholesky(np.eye(4)), np.eye(4) / 4, atol=1e-15)


def test_dominant_corner_gives_vacuum():
    factor = np.zeros((4, 4))
    factor[0, 0] = 5.0
    np.testing.assert_allclose(density_from_cholesky(factor), make_fock(0, 4), atol=1e-15)


@pytest.mark.parametrize("dim", [4, 8, 16, 32, 48])
def test_random_factors_are_physical(dim):
    rng = np.random.default_rng(dim)
    for _ in range(25):
        rho = density_from_cholesky(random_lower_factor(dim, rng))
        assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.eigvalsh(rho).min() >= -1e-12
        np.testing.assert_allclose(rho, rho.conj().T, atol=1e-14)


def test_zero_factor_is_degenerate():
    with pytest.raises(DegenerateException) as info:
        density_from_cholesky(np.zeros((3, 3)))
    assert info.value.code == "degenerate-factor"


def test_upper_triangular_entries_rejected():
    factor = np.eye(3, dtype=complex)
    factor[0, 2] = 0.1
    with pytest.raises(InvalidArgumentException):
        density_from_cholesky(factor)


def test_complex_diagonal_rejected():
    factor = np.eye(3, dtype=complex)
    factor[1, 1] = 1j
    with pytest.raises(InvalidArgumentException):
        density_from_cholesky(factor)


# =============================================================================
# Expectation values and state measures
# =============================================================================

def test_expectation_of_identity_is_one():
    assert expectation(make_thermal(1.0, 8), np.eye(8)) == pytest.approx(1.0)


def test_coherent_mean_photon_number():
    assert expectation(make_coherent(2.0, 32), number_operator(32)) == pytest.approx(4.0, abs=1e-6)


def test_expectation_is_linear_in_the_observable():
    rho = make_coherent(0.5 + 0.5j, 12)
    n, p = number_operator(12), parity(12)
    combined = expectation(rho, 2.0 * n - 3.0 * p)
    assert combined == pytest.approx(2.0 * expectation(rho, n) - 3.0 * expectation(rho, p), abs=1e-12)


def test_non_hermitian_observable_rejected():
    with pytest.raises(InvalidObservableException):
        expectation(make_fock(0, 4), annihilation(4))


def test_mismatched_observable_rejected():
    with pytest.raises(InvalidObservableException):
        expectation(make_fock(0, 4), np.eye(5))


def test_fidelity_with_itself_and_orthogonal():
    rho = make_thermal(0.8, 10)
    assert fidelity(rho, rho) == pytest.approx(1.0, abs=1e-9)
    assert fidelity(make_fock(0, 6), make_fock(1, 6)) == pytest.approx(0.0, abs=1e-12)


def test_fidelity_of_pure_states_is_squared_overlap():
    rng = np.random.default_rng(11)
    for _ in range(20):
        psi, phi = random_pure_ket(6, rng), random_pure_ket(6, rng)
        expected = abs(np.vdot(psi, phi)) ** 2
        value = fidelity(ket_to_density(psi), ket_to_density(phi))
        assert value == pytest.approx(expected, abs=1e-6)
        assert root_fidelity(ket_to_density(psi), ket_to_density(phi)) == pytest.approx(math.sqrt(expected), abs=1e-6)


def test_fidelity_is_symmetric_and_bounded():
    rng = np.random.default_rng(3)
    for _ in range(10):
        rho = density_from_cholesky(random_lower_factor(5, rng))
        sigma = density_from_cholesky(random_lower_factor(5, rng))
        forward, backward = fidelity(rho, sigma), fidelity(sigma, rho)
        assert forward == pytest.approx(backward, abs=1e-8)
        assert 0.0 <= forward <= 1.0 + 1e-9


def test_fidelity_rejects_invalid_state():
    bad = np.diag([1.5, -0.5]).astype(complex)
    with pytest.raises(InvalidStateException):
        fidelity(bad, make_fock(0, 2))


def test_trace_distance_and_purity():
    vacuum, one = make_fock(0, 4), make_fock(1, 4)
    assert trace_distance(vacuum, one) == pytest.approx(1.0)
    assert trace_distance(vacuum, vacuum) == pytest.approx(0.0)
    assert purity(vacuum) == pytest.approx(1.0)
    assert purity(np.eye(4) / 4) == pytest.approx(0.25)


def test_mixture_and_photon_distribution():
    rho = make_mixture([1, 3], [make_fock(0, 4), make_fock(2, 4)])
    np.testing.assert_allclose(photon_distribution(rho), [0.25, 0, 0.75, 0])
    validate_density_matrix(rho)


def test_mixture_rejects_negative_weights():
    with pytest.raises(InvalidArgumentException):
        make_mixture([1, -1], [make_fock(0, 4), make_fock(1, 4)])


def test_embed_zero_pads():
    rho = embed(make_fock(1, 3), 5)
    assert rho.shape == (5, 5)
    assert rho[1, 1] == 1
    with pytest.raises(InvalidDimensionException):
        embed(rho, 3)
