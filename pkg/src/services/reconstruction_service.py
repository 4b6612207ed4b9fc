"""
Density-matrix reconstruction backends.

* iterative maximum likelihood (R rho R fixed-point iteration),
* Cholesky-parameterized gradient descent on a standard loss, with either
  a raw factor tensor or a generator network as the trainable object,
* the adversarial QST-CGAN fit.

All backends share the stopping rule in `ConvergenceMonitor` and report
through `FitReport`.
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.core.config import get_settings
from src.core.exceptions import InvalidArgumentException, ShapeMismatchException
from src.core.logging import get_logger
from src.nn.graph import NetworkGraph
from src.nn.layers import (
    Concat,
    Conv2DTranspose,
    Dense,
    GaussianConv,
    GaussianNoise,
    InstanceNorm,
    LeakyReLU,
    Reshape,
)
from src.nn.losses import get_loss, l1_loss
from src.nn.optim import Adam
from src.nn.penalty import gradient_penalty, patch_score, patch_score_grad
from src.nn.quantum_layers import DensityMatrixLayer, ExpectationLayer, UnitMax
from src.physics.fock import DensityMatrix, fidelity, validate_density_matrix
from src.physics.measure import DataVector, GridLayout, MeasurementKind, MeasurementSet, Normalization, expectations
from src.schemas.config_schema import (
    AdamConfig,
    CganConfig,
    CholeskyFitConfig,
    FitControl,
    ImleConfig,
    KnownNoise,
    LossKind,
)
from src.schemas.report_schema import FitReport
from src.schemas.state_schema import DensityMatrixPayload

logger = get_logger(__name__)

LOG_FLOOR = 1e-12
SATURATION_SCORE = 1e-6


@dataclass(frozen=True, eq=False)
class ReconstructionProblem:
    """Data, the operators that produced it, and optional known noise and reference state."""

    data: DataVector
    ops: MeasurementSet
    known_noise: Optional[KnownNoise] = None
    true_state: Optional[DensityMatrix] = None

    def __post_init__(self) -> None:
        if len(self.data) != len(self.ops):
            raise ShapeMismatchException("reconstruction problem", len(self.ops), len(self.data))
        if self.true_state is not None and np.asarray(self.true_state).shape != (self.cutoff, self.cutoff):
            raise ShapeMismatchException("reconstruction problem", (self.cutoff, self.cutoff), np.asarray(self.true_state).shape)

    @property
    def cutoff(self) -> int:
        return self.ops.cutoff


# =============================================================================
# Stopping rule
# =============================================================================

class ConvergenceMonitor:
    """
    Windowed stopping rule on a scalar trace.

    The trace is averaged over consecutive windows of ``window`` entries.
    Once at least ``min_iters`` entries exist, the fit stops at the end of
    a window when the last ``windows`` window means differ pairwise by
    less than ``tol``.
    """

    def __init__(self, window: int = 100, windows: int = 5, tol: float = 1e-5, min_iters: int = 500) -> None:
        self.window = window
        self.windows = windows
        self.tol = tol
        self.min_iters = max(min_iters, window * windows)
        self.trace: list[float] = []

    @classmethod
    def from_control(cls, control: FitControl) -> "ConvergenceMonitor":
        return cls(control.window, control.windows, control.tol, control.min_iters)

    def update(self, value: float) -> bool:
        """Record one value; True when the fit should stop."""
        self.trace.append(float(value))
        count = len(self.trace)
        if count < self.min_iters or count % self.window:
            return False
        recent = np.asarray(self.trace[count - self.window * self.windows:])
        means = recent.reshape(self.windows, self.window).mean(axis=1)
        return bool(np.all(np.abs(np.diff(means)) < self.tol))


def convergence_monitor(trace: list[float], window: int = 100, windows: int = 5, tol: float = 1e-5, min_iters: int = 500) -> Optional[int]:
    """Number of entries after which the stopping rule fires, or None."""
    monitor = ConvergenceMonitor(window, windows, tol, min_iters)
    for value in trace:
        if monitor.update(value):
            return len(monitor.trace)
    return None


class _FitTracker:
    """Collects traces, flags and the stop decision for one fit."""

    def __init__(self, method: str, problem: ReconstructionProblem, control: FitControl) -> None:
        self.method = method
        self.problem = problem
        self.control = control
        self.monitor = ConvergenceMonitor.from_control(control)
        self.fidelity_trace: list[float] = []
        self.loss_traces: dict[str, list[float]] = {}
        self.flags: list[str] = []
        self.stop_reason = "max_iters"
        self.iterations = 0

    def flag(self, name: str) -> None:
        if name not in self.flags:
            logger.warning("%s: %s", self.method, name)
            self.flags.append(name)

    def record_losses(self, **losses: float) -> None:
        for key, value in losses.items():
            self.loss_traces.setdefault(key, []).append(float(value))

    def step(self, rho: DensityMatrix, generated: Optional[np.ndarray] = None) -> bool:
        """Record an iterate; True when the fit should stop."""
        self.iterations += 1
        reached = False
        if self.problem.true_state is not None:
            value = fidelity(self.problem.true_state, rho)
            self.fidelity_trace.append(value)
            target = self.control.target_fidelity
            reached = target is not None and value >= target
        else:
            if generated is None:
                generated = _normalized_statistics(rho, self.problem)
            value = -float(np.mean((generated - self.problem.data.values) ** 2))

        if self.iterations % self.control.log_every == 0:
            logger.info("%s iteration %d: monitor=%.8f", self.method, self.iterations, value)

        if reached:
            self.stop_reason = "target_fidelity"
            return True
        if self.monitor.update(value):
            self.stop_reason = "converged"
            return True
        return False

    def report(self, rho: DensityMatrix) -> FitReport:
        rho = validate_density_matrix(rho, f"{self.method} estimate")
        final = fidelity(self.problem.true_state, rho) if self.problem.true_state is not None else None
        logger.info("%s stopped after %d iterations (%s)", self.method, self.iterations, self.stop_reason)
        return FitReport(
            method=self.method,
            iterations=self.iterations,
            stop_reason=self.stop_reason,
            fidelity_trace=self.fidelity_trace,
            loss_traces=self.loss_traces,
            flags=self.flags,
            final_fidelity=final,
            final_state=DensityMatrixPayload.from_array(rho),
        )


def _normalized_statistics(rho: DensityMatrix, problem: ReconstructionProblem) -> np.ndarray:
    values = expectations(rho, problem.ops)
    peak = values.max()
    return values / peak if peak > 0 else values


def _adam(params, config: AdamConfig) -> Adam:
    return Adam(
        params,
        learning_rate=config.learning_rate,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
        decay_rate=config.decay_rate,
        decay_steps=config.decay_steps,
    )


# =============================================================================
# Network builders
# =============================================================================

def _noise_layers(problem_ops: MeasurementSet, known_noise: Optional[KnownNoise]) -> tuple[list, list]:
    """(layers before unit-max, layers after unit-max) realizing the known noise."""
    if known_noise is None:
        return [], []
    if known_noise.kind == "gaussian_conv":
        grid = problem_ops.grid
        if grid.layout is not GridLayout.SQUARE:
            raise InvalidArgumentException("a known convolution needs data on a square grid")
        return [GaussianConv(known_noise.n_th, grid.shape, grid.spacing)], []
    return [], [GaussianNoise(known_noise.sigma_G)]


def build_generator(ops: MeasurementSet, known_noise: Optional[KnownNoise] = None, seed: int = 0) -> NetworkGraph:
    """
    Generator mapping a data vector to statistics of a physical state.

    Dense to ``cutoff^2 / 2`` units, reshape to ``(cutoff/2, cutoff/2, 2)``,
    one stride-2 and three stride-1 transpose convolutions, then the
    density-matrix and expectation layers.

    Raises:
        InvalidArgumentException: If the cutoff is odd
    """
    cutoff = ops.cutoff
    if cutoff % 2:
        raise InvalidArgumentException(
            f"generator cutoff must be even (one stride-2 upsampling of cutoff/2), got {cutoff}; use {cutoff + 1}"
        )
    half = cutoff // 2
    before, after = _noise_layers(ops, known_noise)
    layers = [
        Dense(half * half * 2, use_bias=False),
        LeakyReLU(),
        Reshape((half, half, 2)),
        Conv2DTranspose(64, 4, 2, "same"),
        InstanceNorm(),
        LeakyReLU(),
        Conv2DTranspose(64, 4, 1, "same"),
        InstanceNorm(),
        LeakyReLU(),
        Conv2DTranspose(32, 4, 1, "same"),
        LeakyReLU(),
        Conv2DTranspose(2, 4, 1, "same"),
        DensityMatrixLayer(),
        ExpectationLayer(ops.operators),
        *before,
        UnitMax(),
        *after,
    ]
    return NetworkGraph(layers, (len(ops),), seed=seed, name="generator")


def build_discriminator(n_ops: int, seed: int = 0) -> NetworkGraph:
    """Dense 128-128-64-64 on the concatenated pair (d, d'); the last layer is linear."""
    layers = [
        Concat(),
        Dense(128),
        LeakyReLU(),
        Dense(128),
        LeakyReLU(),
        Dense(64),
        LeakyReLU(),
        Dense(64),
    ]
    return NetworkGraph(layers, [(n_ops,), (n_ops,)], seed=seed, name="discriminator")


def _density_output(graph: NetworkGraph) -> DensityMatrix:
    return graph.activations[graph.index_of(DensityMatrixLayer.kind)][0]


def _unit_max_output(graph: NetworkGraph) -> np.ndarray:
    return graph.activations[graph.index_of(UnitMax.kind)][0]


class ReconstructionService:
    """
    Service layer for reconstruction fits.

    Stateless apart from the settings it reads; one call is one
    single-threaded, deterministic fit.
    """

    def __init__(self) -> None:
        self.settings = get_settings()

    # -------------------------------------------------------------------------
    # iMLE
    # -------------------------------------------------------------------------

    def imle(self, problem: ReconstructionProblem, config: ImleConfig = ImleConfig()) -> FitReport:
        """
        Iterative maximum likelihood starting from the maximally mixed state.

        Each step applies ``rho <- R rho R / tr(R rho R)`` with
        ``R = sum_i (d_i / p_i) O_i`` and ``p_i = tr(O_i rho)``.
        """
        if problem.ops.kind is MeasurementKind.DISPLACED_PARITY:
            raise InvalidArgumentException("iMLE needs positive operators; displaced parity data is fit by cholesky or cgan")
        tracker = _FitTracker("imle", problem, config.control)
        floor = self.settings.PROBABILITY_FLOOR
        operators = problem.ops.operators
        data = problem.data.values
        if np.any(data < 0):
            tracker.flag("negative-data-clipped")
            data = np.clip(data, 0.0, None)

        cutoff = problem.cutoff
        rho = np.eye(cutoff, dtype=np.complex128) / cutoff
        for _ in range(config.control.max_iters):
            probabilities = expectations(rho, problem.ops)
            if np.any((probabilities < floor) & (data > 0)):
                tracker.flag("probability-floor")
            ratios = data / np.maximum(probabilities, floor)
            r_op = np.einsum("k,kab->ab", ratios, operators)
            updated = r_op @ rho @ r_op
            rho = updated / np.trace(updated).real
            rho = 0.5 * (rho + rho.conj().T)
            nll = -float(np.sum(data * np.log(np.maximum(probabilities, floor))))
            tracker.record_losses(nll=nll)
            if tracker.step(rho):
                break
        return tracker.report(rho)

    # -------------------------------------------------------------------------
    # Cholesky gradient descent
    # -------------------------------------------------------------------------

    def _target(self, problem: ReconstructionProblem, loss: LossKind, tracker: _FitTracker) -> np.ndarray:
        data = problem.data.values
        if problem.data.normalization is not Normalization.UNIT_MAX:
            tracker.flag("data-not-unit-max")
        if loss in (LossKind.CE, LossKind.KL) and np.any(data < 0):
            tracker.flag("negative-data-clipped")
            data = np.clip(data, 0.0, None)
        return data

    def cholesky_fit(self, problem: ReconstructionProblem, config: CholeskyFitConfig = CholeskyFitConfig()) -> FitReport:
        """
        Adam descent of a standard loss through the Cholesky density-matrix map.

        ``direct`` trains the raw (N, N, 2) factor tensor itself; ``generator``
        trains the generator network on the same loss.
        """
        method = f"cholesky:{config.loss.value}" if config.parameterization == "direct" else f"generator:{config.loss.value}"
        tracker = _FitTracker(method, problem, config.control)
        target = self._target(problem, config.loss, tracker)
        loss_fn = get_loss(config.loss.value)
        x_in = problem.data.values[None, :]

        if config.parameterization == "generator":
            graph = build_generator(problem.ops, problem.known_noise, seed=config.seed)
            optimizer = _adam(graph.parameters(), config.generator_optimizer)
        else:
            before, after = _noise_layers(problem.ops, problem.known_noise)
            graph = NetworkGraph(
                [DensityMatrixLayer(), ExpectationLayer(problem.ops.operators), *before, UnitMax(), *after],
                (problem.cutoff, problem.cutoff, 2),
                seed=config.seed,
                name="cholesky",
            )
            rng = np.random.default_rng(config.seed)
            raw = np.zeros((1, problem.cutoff, problem.cutoff, 2))
            raw[0, :, :, 0] = np.eye(problem.cutoff)
            raw += 0.1 * rng.standard_normal(raw.shape)
            x_in = raw
            optimizer = _adam([raw], config.optimizer)

        for _ in range(config.control.max_iters):
            graph.zero_grad()
            generated = graph.forward(x_in, training=True)[0]
            value, grad = loss_fn(target, generated)
            input_grad = graph.backward(grad[None, :])
            if config.parameterization == "generator":
                optimizer.step(graph.gradients())
            else:
                optimizer.step([input_grad])
            tracker.record_losses(**{config.loss.value: value})
            if tracker.step(_density_output(graph), _unit_max_output(graph)):
                break

        graph.forward(x_in, training=False)
        return tracker.report(_density_output(graph))

    # -------------------------------------------------------------------------
    # QST-CGAN
    # -------------------------------------------------------------------------

    def qst_cgan_fit(self, problem: ReconstructionProblem, config: CganConfig = CganConfig()) -> FitReport:
        """
        Adversarial fit: one discriminator step, then one generator step, per iteration.

        Discriminator loss ``-log D(d, d) - log(1 - D(d, d')) + lambda_gp * penalty``;
        generator loss ``log(1 - D(d, d')) + lambda_l1 * L1(d, d')``.
        """
        tracker = _FitTracker("cgan", problem, config.control)
        data = problem.data.values
        if problem.data.normalization is not Normalization.UNIT_MAX:
            tracker.flag("data-not-unit-max")
        seeds = np.random.SeedSequence(config.seed).generate_state(3)
        generator = build_generator(problem.ops, problem.known_noise, seed=int(seeds[0]))
        discriminator = build_discriminator(len(problem.ops), seed=int(seeds[1]))
        mix_rng = np.random.default_rng(int(seeds[2]))
        g_opt = _adam(generator.parameters(), config.generator_optimizer)
        d_opt = _adam(discriminator.parameters(), config.discriminator_optimizer)

        d_batch = data[None, :]
        for _ in range(config.control.max_iters):
            # discriminator step
            discriminator.zero_grad()
            fake = generator.forward(d_batch, training=True)

            z_real = discriminator.forward([d_batch, d_batch], training=True)
            s_real = patch_score(z_real)
            discriminator.backward(patch_score_grad(z_real, -1.0 / np.maximum(s_real, LOG_FLOOR)))

            z_fake = discriminator.forward([d_batch, fake], training=True)
            s_fake = patch_score(z_fake)
            discriminator.backward(patch_score_grad(z_fake, 1.0 / np.maximum(1.0 - s_fake, LOG_FLOOR)))
            if float(s_fake[0]) < SATURATION_SCORE:
                tracker.flag("discriminator-saturated")

            if config.penalty_point == "interpolated":
                eps = mix_rng.random()
                point = [d_batch, eps * d_batch + (1.0 - eps) * fake]
            else:
                point = [d_batch, fake]
            discriminator.forward(point, training=True)
            penalty = gradient_penalty(discriminator, np.concatenate(point, axis=1), config.lambda_gp)
            d_loss = (
                -float(np.log(max(s_real[0], LOG_FLOOR)))
                - float(np.log(max(1.0 - s_fake[0], LOG_FLOOR)))
                + penalty
            )
            d_opt.step(discriminator.gradients())

            # generator step
            generator.zero_grad()
            fake = generator.forward(d_batch, training=True)
            z = discriminator.forward([d_batch, fake], training=True)
            score = patch_score(z)
            adversarial = float(np.log(max(1.0 - score[0], LOG_FLOOR)))
            _, grad_fake = discriminator.backward(patch_score_grad(z, -1.0 / np.maximum(1.0 - score, LOG_FLOOR)))
            l1_value, l1_grad = l1_loss(d_batch, fake)
            generator.backward(grad_fake + config.lambda_l1 * l1_grad)
            g_opt.step(generator.gradients())

            tracker.record_losses(
                discriminator=d_loss,
                generator=adversarial + config.lambda_l1 * l1_value,
                l1=l1_value,
                penalty=penalty,
            )
            if tracker.step(_density_output(generator), _unit_max_output(generator)):
                break

        generator.forward(d_batch, training=False)
        return tracker.report(_density_output(generator))

    def fit(self, method: str, problem: ReconstructionProblem, config) -> FitReport:
        """Dispatch on a method name: ``imle``, ``cholesky`` or ``cgan``."""
        if method == "imle":
            return self.imle(problem, config)
        if method == "cholesky":
            return self.cholesky_fit(problem, config)
        if method == "cgan":
            return self.qst_cgan_fit(problem, config)
        raise InvalidArgumentException(f"unknown reconstruction method {method!r}")
