"""
Complex linear algebra and bosonic primitives in a truncated Fock space.

Matrices are plain ``numpy`` arrays of dtype ``complex128``. The type
aliases below name the roles a matrix plays; validators enforce the
invariants where a function needs them.
"""
import math
from typing import Any

import numpy as np
import numpy.typing as npt
from scipy import linalg

from src.core.config import get_settings
from src.core.exceptions import (
    DegenerateException,
    InvalidArgumentException,
    InvalidDimensionException,
    InvalidObservableException,
    InvalidStateException,
)

CMatrix = npt.NDArray[np.complex128]
Ket = npt.NDArray[np.complex128]
DensityMatrix = npt.NDArray[np.complex128]
CholeskyFactor = npt.NDArray[np.complex128]

MIN_DIM = 2


def check_dim(dim: int) -> None:
    if int(dim) != dim or dim < MIN_DIM:
        raise InvalidDimensionException(dim, MIN_DIM)


# =============================================================================
# Operators
# =============================================================================

def annihilation(dim: int) -> CMatrix:
    """
    Truncated annihilation operator with ``<n-1|a|n> = sqrt(n)``.

    Args:
        dim: Hilbert-space cutoff

    Returns:
        dim x dim matrix, nonzero only on the superdiagonal
    """
    check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=np.float64)), k=1).astype(np.complex128)


def creation(dim: int) -> CMatrix:
    """Truncated creation operator, the adjoint of `annihilation`."""
    return annihilation(dim).conj().T


def number_operator(dim: int) -> CMatrix:
    """Photon-number operator ``a^dagger a``."""
    check_dim(dim)
    return np.diag(np.arange(dim, dtype=np.float64)).astype(np.complex128)


def parity(dim: int) -> CMatrix:
    """Photon parity ``(-1)^(a^dagger a)`` as a diagonal matrix."""
    check_dim(dim)
    return np.diag((-1.0) ** np.arange(dim)).astype(np.complex128)


def displacement(alpha: complex, dim: int) -> CMatrix:
    """
    Displacement operator ``D(alpha) = exp(alpha a^dagger - alpha^* a)``.

    Computed with scipy's scaling-and-squaring Pade exponential of the
    truncated generator, so the result is unitary to machine precision;
    matrix elements near the cutoff carry truncation error.

    Args:
        alpha: Complex displacement amplitude
        dim: Hilbert-space cutoff

    Returns:
        dim x dim unitary matrix

    Raises:
        InvalidArgumentException: If alpha is not finite
    """
    check_dim(dim)
    alpha = complex(alpha)
    if not (math.isfinite(alpha.real) and math.isfinite(alpha.imag)):
        raise InvalidArgumentException(f"displacement amplitude {alpha} is not finite")
    if alpha == 0:
        return np.eye(dim, dtype=np.complex128)
    a = annihilation(dim)
    generator = alpha * a.conj().T - alpha.conjugate() * a
    return linalg.expm(generator)


# =============================================================================
# States
# =============================================================================

def ket_to_density(ket: Ket) -> DensityMatrix:
    """Projector ``|psi><psi|`` of a normalized ket."""
    ket = np.asarray(ket, dtype=np.complex128)
    return np.outer(ket, ket.conj())


def normalize_ket(ket: Ket, what: str = "state") -> Ket:
    """
    Scale a ket to unit norm.

    Raises:
        DegenerateException: If the ket has zero norm
    """
    norm = float(np.linalg.norm(ket))
    if norm <= math.sqrt(get_settings().DEGENERATE_TRACE):
        raise DegenerateException("degenerate-state", f"{what} has zero norm")
    return np.asarray(ket, dtype=np.complex128) / norm


def embed(rho: DensityMatrix, dim: int) -> DensityMatrix:
    """Zero-pad a matrix into a larger Fock space."""
    current = rho.shape[0]
    if dim < current:
        raise InvalidDimensionException(dim, current)
    if dim == current:
        return rho
    padded = np.zeros((dim, dim), dtype=np.complex128)
    padded[:current, :current] = rho
    return padded


def validate_density_matrix(rho: Any, what: str = "rho") -> DensityMatrix:
    """
    Check the density-matrix invariants and return the array.

    Hermitian to ``HERMITIAN_TOL``, unit trace to ``TRACE_TOL`` and
    smallest eigenvalue above ``-PSD_TOL``.

    Raises:
        InvalidStateException: If any invariant fails
    """
    settings = get_settings()
    rho = np.asarray(rho, dtype=np.complex128)
    if rho.ndim != 2 or rho.shape[0] != rho.shape[1] or rho.shape[0] < MIN_DIM:
        raise InvalidStateException(f"{what} must be a square matrix of dim >= 2, got {rho.shape}")
    if not np.all(np.isfinite(rho)):
        raise InvalidStateException(f"{what} has non-finite entries")
    if np.max(np.abs(rho - rho.conj().T)) > settings.HERMITIAN_TOL:
        raise InvalidStateException(f"{what} is not Hermitian")
    trace = np.trace(rho).real
    if abs(trace - 1.0) > settings.TRACE_TOL:
        raise InvalidStateException(f"{what} has trace {trace!r}, expected 1")
    min_eig = float(np.linalg.eigvalsh(rho).min())
    if min_eig < -settings.PSD_TOL:
        raise InvalidStateException(f"{what} has negative eigenvalue {min_eig!r}")
    return rho


def is_density_matrix(rho: Any) -> bool:
    """Boolean form of `validate_density_matrix`."""
    try:
        validate_density_matrix(rho)
    except InvalidStateException:
        return False
    return True


def validate_cholesky_factor(factor: Any) -> CholeskyFactor:
    """
    Check that a factor is lower triangular with a real diagonal.

    Raises:
        InvalidArgumentException: If the upper triangle or diagonal imaginary part is nonzero
    """
    factor = np.asarray(factor, dtype=np.complex128)
    if factor.ndim != 2 or factor.shape[0] != factor.shape[1]:
        raise InvalidArgumentException(f"Cholesky factor must be square, got {factor.shape}")
    check_dim(factor.shape[0])
    if np.any(np.triu(factor, k=1) != 0):
        raise InvalidArgumentException("Cholesky factor has nonzero strictly-upper entries")
    if np.any(np.diag(factor).imag != 0):
        raise InvalidArgumentException("Cholesky factor has complex diagonal entries")
    return factor


def density_from_cholesky(factor: CholeskyFactor) -> DensityMatrix:
    """
    Physical density matrix ``T^dagger T / tr(T^dagger T)``.

    Raises:
        DegenerateException: If the trace is below ``DEGENERATE_TRACE``
    """
    factor = validate_cholesky_factor(factor)
    gram = factor.conj().T @ factor
    trace = float(np.trace(gram).real)
    if trace <= get_settings().DEGENERATE_TRACE:
        raise DegenerateException("degenerate-factor", "Cholesky factor has zero trace")
    rho = gram / trace
    return 0.5 * (rho + rho.conj().T)


def make_mixture(weights: npt.ArrayLike, states: list[DensityMatrix]) -> DensityMatrix:
    """
    Convex combination of density matrices.

    Raises:
        InvalidArgumentException: If weights are negative or do not match the states
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape != (len(states),) or np.any(weights < 0) or weights.sum() <= 0:
        raise InvalidArgumentException("mixture weights must be nonnegative, one per state")
    weights = weights / weights.sum()
    return sum(w * s for w, s in zip(weights, states))


# =============================================================================
# Measures
# =============================================================================

def expectation(rho: DensityMatrix, observable: CMatrix) -> float:
    """
    ``Re tr(O rho)`` for a Hermitian observable.

    Raises:
        InvalidObservableException: If shapes differ or O is not Hermitian
    """
    tol = get_settings().OBSERVABLE_TOL
    rho = np.asarray(rho)
    observable = np.asarray(observable)
    if observable.shape != rho.shape:
        raise InvalidObservableException(
            f"observable shape {observable.shape} does not match state shape {rho.shape}"
        )
    if np.max(np.abs(observable - observable.conj().T)) > tol:
        raise InvalidObservableException("observable is not Hermitian")
    value = np.einsum("ab,ba->", observable, rho)
    assert abs(value.imag) < tol, f"tr(O rho) has imaginary part {value.imag}"
    return float(value.real)


def _psd_sqrt(matrix: CMatrix) -> CMatrix:
    eigvals, eigvecs = linalg.eigh(0.5 * (matrix + matrix.conj().T))
    roots = np.sqrt(np.clip(eigvals, 0.0, None))
    return (eigvecs * roots) @ eigvecs.conj().T


def root_fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """
    Uhlmann root fidelity ``tr sqrt(sqrt(rho) sigma sqrt(rho))``.

    This is the convention behind published state-overlap figures; it is
    the square root of `fidelity`.
    """
    rho = validate_density_matrix(rho, "rho")
    sigma = validate_density_matrix(sigma, "sigma")
    if rho.shape != sigma.shape:
        raise InvalidStateException(f"state shapes differ: {rho.shape} vs {sigma.shape}")
    root = _psd_sqrt(rho)
    inner = root @ sigma @ root
    eigvals = linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(np.clip(eigvals, 0.0, None))))


def fidelity(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """
    State fidelity ``[tr sqrt(sqrt(rho) sigma sqrt(rho))]^2``.

    Reduces to ``|<psi|phi>|^2`` for pure states. Matrix square roots use a
    Hermitian eigendecomposition with eigenvalues clamped at zero.

    Raises:
        InvalidStateException: If either input is not a valid density matrix
    """
    value = root_fidelity(rho, sigma) ** 2
    return float(np.clip(value, 0.0, 1.0 + 1e-9))


def trace_distance(rho: DensityMatrix, sigma: DensityMatrix) -> float:
    """Half the trace norm of ``rho - sigma``."""
    delta = np.asarray(rho) - np.asarray(sigma)
    return float(0.5 * np.abs(linalg.eigvalsh(0.5 * (delta + delta.conj().T))).sum())


def purity(rho: DensityMatrix) -> float:
    """``tr(rho^2)``."""
    rho = np.asarray(rho)
    return float(np.einsum("ab,ba->", rho, rho).real)


def photon_distribution(rho: DensityMatrix) -> npt.NDArray[np.float64]:
    """Fock-basis populations ``<n|rho|n>``."""
    return np.clip(np.diag(np.asarray(rho)).real, 0.0, None)
