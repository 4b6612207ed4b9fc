"""
Constructors for the eight optical state families.

Every constructor returns a validated density matrix at the requested
cutoff. States whose mean photon number exceeds half the cutoff are
still built, with a `TruncationWarning`.
"""
import math
import warnings

import numpy as np
from scipy.special import comb

from src.core.exceptions import (
    DegenerateException,
    InvalidArgumentException,
    OutOfSpaceException,
    TruncationWarning,
)
from src.core.logging import get_logger
from src.physics.fock import (
    DensityMatrix,
    Ket,
    density_from_cholesky,
    expectation,
    ket_to_density,
    normalize_ket,
    number_operator,
    check_dim,
)

logger = get_logger(__name__)

NUM_1562_MEAN_PHOTON = 1.562
GKP_GRID_EXTENT = 20


def _warn_truncation(family: str, mean_photons: float, cutoff: int) -> None:
    if mean_photons > cutoff / 2:
        message = (
            f"{family} state with mean photon number {mean_photons:.3g} "
            f"exceeds half the cutoff {cutoff}; expect truncation artefacts"
        )
        logger.warning(message)
        warnings.warn(message, TruncationWarning, stacklevel=3)


def _check_mu(mu: int) -> int:
    if mu not in (0, 1):
        raise InvalidArgumentException(f"logical index mu must be 0 or 1, got {mu}")
    return int(mu)


def coherent_ket(alpha: complex, cutoff: int) -> Ket:
    """
    Truncated coherent amplitudes ``e^{-|alpha|^2/2} alpha^n / sqrt(n!)``.

    The result is not renormalized; the missing tail mass is the
    truncation error.
    """
    check_dim(cutoff)
    alpha = complex(alpha)
    amplitudes = np.empty(cutoff, dtype=np.complex128)
    amplitudes[0] = math.exp(-0.5 * abs(alpha) ** 2)
    for n in range(1, cutoff):
        amplitudes[n] = amplitudes[n - 1] * alpha / math.sqrt(n)
    return amplitudes


def make_fock(n: int, cutoff: int) -> DensityMatrix:
    """
    Fock state ``|n><n|``.

    Raises:
        OutOfSpaceException: If n is not below the cutoff
    """
    check_dim(cutoff)
    if n < 0:
        raise InvalidArgumentException(f"photon number must be nonnegative, got {n}")
    if n >= cutoff:
        raise OutOfSpaceException("fock state", n, cutoff)
    rho = np.zeros((cutoff, cutoff), dtype=np.complex128)
    rho[n, n] = 1.0
    return rho


def make_coherent(alpha: complex, cutoff: int) -> DensityMatrix:
    """Coherent state ``|alpha>``, renormalized after truncation."""
    _warn_truncation("coherent", abs(alpha) ** 2, cutoff)
    return ket_to_density(normalize_ket(coherent_ket(alpha, cutoff), "coherent state"))


def make_thermal(n_th: float, cutoff: int) -> DensityMatrix:
    """
    Thermal state with Bose-Einstein populations ``n_th^n / (n_th+1)^(n+1)``.

    The truncated geometric distribution is renormalized to unit trace.

    Raises:
        InvalidArgumentException: If n_th is negative
    """
    check_dim(cutoff)
    if not n_th >= 0:
        raise InvalidArgumentException(f"thermal occupation must be nonnegative, got {n_th}")
    _warn_truncation("thermal", n_th, cutoff)
    ratio = n_th / (n_th + 1.0)
    populations = ratio ** np.arange(cutoff, dtype=np.float64)
    populations /= populations.sum()
    return np.diag(populations).astype(np.complex128)


def make_num_1562(mu: int, cutoff: int) -> DensityMatrix:
    """
    Logical states of the numerically optimized code with mean photon number 1.562.

    Raises:
        InvalidArgumentException: If mu is not 0 or 1
        OutOfSpaceException: If the cutoff cannot hold level 4
    """
    mu = _check_mu(mu)
    if cutoff < 5:
        raise OutOfSpaceException("num(1.562) state", 4, cutoff)
    root17 = math.sqrt(17.0)
    ket = np.zeros(cutoff, dtype=np.complex128)
    if mu == 0:
        ket[0] = math.sqrt(7.0 - root17)
        ket[3] = math.sqrt(root17 - 1.0)
    else:
        ket[1] = math.sqrt(9.0 - root17)
        ket[4] = math.sqrt(root17 - 3.0)
    return ket_to_density(ket / math.sqrt(6.0))


def make_binomial(S: int, N: int, mu: int, cutoff: int) -> DensityMatrix:
    """
    Binomial code state ``2^{-(N+1)/2} sum_m (-1)^{mu m} sqrt(C(N+1, m)) |(S+1)m>``.

    Raises:
        OutOfSpaceException: If ``(S+1)(N+1)`` is not below the cutoff
    """
    mu = _check_mu(mu)
    check_dim(cutoff)
    if S < 0 or N < 0:
        raise InvalidArgumentException(f"binomial spacing and order must be nonnegative, got S={S}, N={N}")
    top = (S + 1) * (N + 1)
    if top >= cutoff:
        raise OutOfSpaceException("binomial state", top, cutoff)
    ket = np.zeros(cutoff, dtype=np.complex128)
    for m in range(N + 2):
        ket[(S + 1) * m] = (-1.0) ** (mu * m) * math.sqrt(comb(N + 1, m, exact=True))
    ket /= math.sqrt(2.0 ** (N + 1))
    return ket_to_density(ket)


def make_cat(alpha: complex, S: int, mu: int, cutoff: int) -> DensityMatrix:
    """
    Cat code state: ``|alpha>`` projected onto levels ``2m(S+1) + (S+1)mu``.

    Raises:
        DegenerateException: If the projection annihilates ``|alpha>`` numerically
    """
    mu = _check_mu(mu)
    if S < 0:
        raise InvalidArgumentException(f"cat symmetry S must be nonnegative, got {S}")
    _warn_truncation("cat", abs(alpha) ** 2, cutoff)
    ket = coherent_ket(alpha, cutoff)
    levels = np.arange(cutoff)
    period = 2 * (S + 1)
    ket = np.where(levels % period == (S + 1) * mu, ket, 0.0)
    try:
        ket = normalize_ket(ket, "cat projection")
    except DegenerateException as exc:
        raise DegenerateException("degenerate-projection", exc.detail) from exc
    return ket_to_density(ket)


def make_gkp_finite(
    Delta: float,
    mu: int,
    cutoff: int,
    grid_extent: int = GKP_GRID_EXTENT,
) -> DensityMatrix:
    """
    Finite-energy GKP state on the square lattice.

    Superposes ``e^{-Delta^2 |a|^2} e^{-i Re(a) Im(a)} |a>`` over
    ``a = sqrt(pi/2)(2 n1 + mu) + i sqrt(pi/2) n2`` with
    ``n1, n2`` in ``[-grid_extent, grid_extent]``.

    Raises:
        DegenerateException: If the superposition vanishes
    """
    mu = _check_mu(mu)
    check_dim(cutoff)
    if not Delta > 0:
        raise InvalidArgumentException(f"GKP envelope Delta must be positive, got {Delta}")
    if not 0.2 <= Delta <= 0.5:
        logger.warning("GKP envelope Delta=%s is outside the usual range [0.2, 0.5]", Delta)
    spacing = math.sqrt(math.pi / 2.0)
    ket = np.zeros(cutoff, dtype=np.complex128)
    for n1 in range(-grid_extent, grid_extent + 1):
        for n2 in range(-grid_extent, grid_extent + 1):
            point = complex(spacing * (2 * n1 + mu), spacing * n2)
            weight = math.exp(-(Delta ** 2) * abs(point) ** 2)
            if weight == 0.0:
                continue
            phase = np.exp(-1j * point.real * point.imag)
            ket += weight * phase * coherent_ket(point, cutoff)
    ket = normalize_ket(ket, "GKP superposition")
    return ket_to_density(ket)


def make_random_density(density: float, cutoff: int, seed: int) -> DensityMatrix:
    """
    Random physical state from a sparse lower-triangular Ginibre factor.

    Off-diagonal factor entries survive with probability ``density``; the
    real positive diagonal is always kept, so density 1 gives a full-rank
    state almost surely.

    Raises:
        InvalidArgumentException: If density is outside (0, 1]
    """
    check_dim(cutoff)
    if not 0.0 < density <= 1.0:
        raise InvalidArgumentException(f"random-state density must be in (0, 1], got {density}")
    rng = np.random.default_rng(seed)
    gaussian = (rng.standard_normal((cutoff, cutoff)) + 1j * rng.standard_normal((cutoff, cutoff))) / math.sqrt(2.0)
    mask = rng.random((cutoff, cutoff)) < density
    factor = np.tril(np.where(mask, gaussian, 0.0), k=-1)
    factor += np.diag(np.abs(np.diag(gaussian)))
    return density_from_cholesky(factor)


def make_cat_fock_mixture(rank: int, cutoff: int, alpha: complex = 2.0, cat_weight: float = 0.8) -> DensityMatrix:
    """
    Rank-r mixture ``0.8 cat(alpha, 0, 0) + 0.2/(r-1) sum_{n<r-1} fock(n)``.

    Rank 1 is the pure cat state.
    """
    if rank < 1:
        raise InvalidArgumentException(f"mixture rank must be at least 1, got {rank}")
    cat = make_cat(alpha, 0, 0, cutoff)
    if rank == 1:
        return cat
    rest = (1.0 - cat_weight) / (rank - 1)
    mixture = cat_weight * cat
    for n in range(rank - 1):
        mixture = mixture + rest * make_fock(n, cutoff)
    return mixture


def mean_photon(rho: DensityMatrix) -> float:
    """``tr(a^dagger a rho)``."""
    return expectation(rho, number_operator(rho.shape[0]))
