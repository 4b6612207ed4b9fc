import math

import numpy as np
import pytest

from oracles import numerical_gradient, relative_error
from src.core.exceptions import (
    DivergenceException,
    InvalidArgumentException,
    NotFoundException,
    ShapeMismatchException,
)
from src.nn.checkpoint import MAGIC, load_checkpoint, read_manifest, save_checkpoint
from src.nn.graph import NetworkGraph
from src.nn.layers import (
    Concat,
    Conv2D,
    Conv2DTranspose,
    Dense,
    Dropout,
    Flatten,
    GaussianConv,
    GaussianNoise,
    InstanceNorm,
    LeakyReLU,
    Reshape,
    Softmax,
    softmax,
)
from src.nn.optim import Adam, ExponentialDecay
from src.nn.penalty import gradient_penalty, input_gradient, patch_score
from src.nn.quantum_layers import DensityMatrixLayer, ExpectationLayer, UnitMax
from src.nn.shapes import conv_output_size, conv_shapes
from src.physics.fock import validate_density_matrix
from src.physics.measure import (
    GridLayout,
    MeasurementKind,
    MeasurementSet,
    PhaseGrid,
    build_operators,
    generalized_q,
    husimi_operators,
    make_square_grid,
)
from src.physics.noise import gaussian_kernel
from src.physics.states import make_fock, make_random_density
from src.services.reconstruction_service import build_discriminator, build_generator

TOLERANCE = 1e-6


def assert_layer_gradients(layers, input_shape, x, seed=0):
    """Compare backward() against central differences for inputs and every parameter."""
    graph = NetworkGraph(layers, input_shape, seed=seed)
    weights = np.random.default_rng(seed + 1).standard_normal(graph.forward(x).shape)

    def loss() -> float:
        return float(np.sum(weights * graph.forward(x)))

    graph.zero_grad()
    graph.forward(x)
    input_grad = graph.backward(weights)
    assert relative_error(input_grad, numerical_gradient(loss, x)) < TOLERANCE
    for name, param, grad in graph.named_parameters():
        assert relative_error(grad, numerical_gradient(loss, param)) < TOLERANCE, name


def away_from_zero(rng, shape):
    values = rng.uniform(0.1, 1.0, shape)
    return values * rng.choice([-1.0, 1.0], size=shape)


# =============================================================================
# Shapes
# =============================================================================

def test_conv_shape_rules():
    assert conv_shapes(3, 1, "valid", (32, 32)) == (30, 30)
    assert conv_shapes(5, 2, "same", (28, 28)) == (14, 14)
    assert conv_shapes(4, 2, "same", (16, 16), transpose=True) == (32, 32)


def test_conv_without_output_rejected():
    with pytest.raises(InvalidArgumentException):
        conv_output_size(2, 3, 1, "valid")
    with pytest.raises(InvalidArgumentException):
        conv_output_size(8, 3, 1, "full")


def test_graph_rejects_too_small_input():
    with pytest.raises(ShapeMismatchException):
        NetworkGraph([Conv2D(4, 3)], (2, 2, 1))


# =============================================================================
# Layer forward values
# =============================================================================

def test_dense_without_bias_maps_zero_to_zero():
    graph = NetworkGraph([Dense(4, use_bias=False)], (3,))
    np.testing.assert_array_equal(graph.forward(np.zeros((2, 3))), np.zeros((2, 4)))


def test_dense_kernel_gradient_is_input():
    graph = NetworkGraph([Dense(4)], (3,))
    x = np.array([[1.0, -2.0, 0.5]])
    graph.forward(x)
    graph.backward(np.ones((1, 4)))
    kernel_grad = dict((name, grad) for name, _, grad in graph.named_parameters())["dense_0.kernel"]
    np.testing.assert_allclose(kernel_grad, np.repeat(x.T, 4, axis=1))


def test_leaky_relu_and_softmax_values():
    graph = NetworkGraph([LeakyReLU()], (2,))
    np.testing.assert_allclose(graph.forward(np.array([[-1.0, 2.0]])), [[-0.3, 2.0]])
    np.testing.assert_allclose(softmax(np.zeros((1, 7))), np.full((1, 7), 1 / 7))


def test_softmax_is_shift_invariant():
    logits = np.random.default_rng(0).standard_normal((3, 5))
    np.testing.assert_allclose(softmax(logits + 123.4), softmax(logits), atol=1e-8)


def test_instance_norm_statistics():
    x = 2.0 * np.random.default_rng(1).standard_normal((2, 6, 6, 3)) + 5.0
    out = NetworkGraph([InstanceNorm()], (6, 6, 3)).forward(x)
    np.testing.assert_allclose(out.mean(axis=(1, 2)), 0.0, atol=1e-6)
    np.testing.assert_allclose(out.var(axis=(1, 2)), 1.0, atol=1e-5)


def test_dropout_modes():
    layer = Dropout(0.4)
    graph = NetworkGraph([layer], (100_000,), seed=3)
    x = np.ones((1, 100_000))
    np.testing.assert_array_equal(graph.forward(x, training=False), x)
    out = graph.forward(x, training=True)
    kept = out[out != 0]
    assert kept.size / x.size == pytest.approx(0.6, abs=0.01)
    np.testing.assert_allclose(kept, 1 / 0.6)


@pytest.mark.parametrize("rate", [-0.1, 1.0])
def test_dropout_rate_range(rate):
    with pytest.raises(InvalidArgumentException):
        Dropout(rate)


def test_gaussian_noise_only_in_training():
    graph = NetworkGraph([GaussianNoise(0.1)], (50,), seed=0)
    x = np.zeros((1, 50))
    np.testing.assert_array_equal(graph.forward(x), x)
    assert np.std(graph.forward(x, training=True)) > 0


def test_gaussian_conv_spreads_delta_into_kernel():
    grid = make_square_grid((-2, 2), 9, 9)
    layer = GaussianConv(0.05, grid.shape, grid.spacing)
    x = np.zeros((1, 81))
    x[0, 40] = 1.0
    out = NetworkGraph([layer], (81,)).forward(x).reshape(9, 9)
    kernel = gaussian_kernel(0.05, grid.spacing)
    h = kernel.shape[0] // 2
    np.testing.assert_allclose(out[4 - h:5 + h, 4 - h:5 + h], kernel, atol=1e-15)


# =============================================================================
# Gradients against finite differences
# =============================================================================

def test_dense_gradients():
    x = np.random.default_rng(0).standard_normal((3, 5))
    assert_layer_gradients([Dense(4)], (5,), x)


def test_conv_valid_gradients():
    x = np.random.default_rng(1).standard_normal((2, 6, 6, 2))
    assert_layer_gradients([Conv2D(3, 3, use_bias=True)], (6, 6, 2), x)


def test_conv_same_strided_gradients():
    x = np.random.default_rng(2).standard_normal((2, 7, 7, 2))
    assert_layer_gradients([Conv2D(3, 5, 2, "same")], (7, 7, 2), x)


@pytest.mark.parametrize("stride,size", [(2, 3), (1, 4)])
def test_conv_transpose_gradients(stride, size):
    x = np.random.default_rng(3).standard_normal((2, size, size, 2))
    assert_layer_gradients([Conv2DTranspose(3, 4, stride, "same", use_bias=True)], (size, size, 2), x)


def test_instance_norm_gradients():
    x = np.random.default_rng(4).standard_normal((2, 4, 4, 3))
    assert_layer_gradients([InstanceNorm()], (4, 4, 3), x)


def test_leaky_relu_gradients():
    x = away_from_zero(np.random.default_rng(5), (3, 6))
    assert_layer_gradients([LeakyReLU()], (6,), x)


def test_softmax_gradients():
    x = np.random.default_rng(6).standard_normal((3, 5))
    assert_layer_gradients([Softmax()], (5,), x)


def test_reshape_flatten_gradients():
    x = np.random.default_rng(7).standard_normal((2, 12))
    assert_layer_gradients([Reshape((2, 3, 2)), Conv2D(2, 2, use_bias=True), Flatten(), Dense(3)], (12,), x)


def test_gaussian_conv_gradients():
    grid = make_square_grid((-2, 2), 7, 7)
    x = np.random.default_rng(8).standard_normal((2, 49))
    assert_layer_gradients([GaussianConv(0.4, grid.shape, grid.spacing)], (49,), x)


def test_unit_max_gradients():
    x = np.random.default_rng(9).uniform(0.1, 1.0, (2, 6))
    x[:, 2] = 1.5
    assert_layer_gradients([UnitMax()], (6,), x)


def test_concat_splits_gradients():
    graph = NetworkGraph([Concat(), Dense(2)], [(3,), (2,)])
    left, right = np.ones((1, 3)), np.ones((1, 2))
    graph.forward([left, right])
    grads = graph.backward(np.ones((1, 2)))
    assert [g.shape for g in grads] == [(1, 3), (1, 2)]


def test_density_matrix_layer_gradients():
    rng = np.random.default_rng(10)
    graph = NetworkGraph([DensityMatrixLayer()], (4, 4, 2))
    x = rng.standard_normal((2, 4, 4, 2))
    w_re, w_im = rng.standard_normal((2, 2, 4, 4))

    def loss() -> float:
        rho = graph.forward(x)
        return float(np.sum(w_re * rho.real + w_im * rho.imag))

    graph.forward(x)
    analytic = graph.backward(w_re + 1j * w_im)
    assert relative_error(analytic, numerical_gradient(loss, x)) < TOLERANCE


def test_expectation_layer_gradients():
    rng = np.random.default_rng(11)
    ops = build_operators(make_square_grid((-1, 1), 2, 2), MeasurementKind.GENERALIZED_Q, 3, photon_number=1).operators
    graph = NetworkGraph([ExpectationLayer(ops)], (3, 3))
    rho_re, rho_im = rng.standard_normal((2, 1, 3, 3))
    weights = rng.standard_normal((1, 4))

    def loss() -> float:
        return float(np.sum(weights * graph.forward(rho_re + 1j * rho_im)))

    graph.forward(rho_re + 1j * rho_im)
    analytic = graph.backward(weights)
    assert relative_error(analytic.real, numerical_gradient(loss, rho_re)) < TOLERANCE
    assert relative_error(analytic.imag, numerical_gradient(loss, rho_im)) < TOLERANCE


def test_state_to_statistics_chain_gradients():
    ops = build_operators(make_square_grid((-2, 2), 3, 3), MeasurementKind.HUSIMI_PROJECTOR, 4).operators
    x = np.random.default_rng(12).standard_normal((1, 4, 4, 2))
    assert_layer_gradients([DensityMatrixLayer(), ExpectationLayer(ops), UnitMax()], (4, 4, 2), x)


# =============================================================================
# Quantum layers
# =============================================================================

def test_identity_factor_gives_maximally_mixed_state():
    raw = np.zeros((1, 5, 5, 2))
    raw[0, :, :, 0] = np.eye(5)
    rho = NetworkGraph([DensityMatrixLayer()], (5, 5, 2)).forward(raw)[0]
    np.testing.assert_allclose(rho, np.eye(5) / 5, atol=1e-12)


def test_random_tensors_give_physical_states():
    graph = NetworkGraph([DensityMatrixLayer()], (16, 16, 2))
    rng = np.random.default_rng(13)
    for rho in graph.forward(rng.standard_normal((200, 16, 16, 2))):
        validate_density_matrix(rho)


def test_density_matrix_is_scale_invariant():
    graph = NetworkGraph([DensityMatrixLayer()], (6, 6, 2))
    raw = np.random.default_rng(14).standard_normal((1, 6, 6, 2))
    np.testing.assert_allclose(graph.forward(3.0 * raw), graph.forward(raw), atol=1e-10)


def test_expectation_layer_matches_phase_space_values():
    grid = make_square_grid((-2, 2), 4, 4)
    rho = make_random_density(1.0, 6, seed=3)
    ops = build_operators(grid, MeasurementKind.GENERALIZED_Q, 6, photon_number=1)
    out = NetworkGraph([ExpectationLayer(ops.operators)], (6, 6)).forward(rho[None])[0]
    np.testing.assert_allclose(out, generalized_q(rho, grid, 1).values, atol=1e-10)


def test_husimi_expectation_of_vacuum_at_origin():
    origin = PhaseGrid(points=np.zeros(1, dtype=complex), layout=GridLayout.SCATTER)
    ops = husimi_operators(origin, 4).operators
    out = NetworkGraph([ExpectationLayer(ops)], (4, 4)).forward(make_fock(0, 4)[None])
    assert out[0, 0] == pytest.approx(1 / math.pi)


def test_identity_observable_has_no_gradient():
    graph = NetworkGraph([DensityMatrixLayer(), ExpectationLayer(np.eye(4)[None])], (4, 4, 2))
    raw = np.random.default_rng(15).standard_normal((1, 4, 4, 2))
    assert graph.forward(raw)[0, 0] == pytest.approx(1.0)
    np.testing.assert_allclose(graph.backward(np.ones((1, 1))), 0.0, atol=1e-12)


# =============================================================================
# Generator and discriminator
# =============================================================================

def placeholder_ops(n: int, cutoff: int) -> MeasurementSet:
    return MeasurementSet(
        kind=MeasurementKind.HUSIMI_PROJECTOR,
        operators=np.zeros((n, cutoff, cutoff), dtype=np.complex128),
        grid=make_square_grid(nx=int(math.isqrt(n)), ny=int(math.isqrt(n))),
        cutoff=cutoff,
    )


def test_generator_parameter_count():
    assert build_generator(placeholder_ops(1024, 32)).parameter_count == 625_920


def test_generator_needs_even_cutoff():
    with pytest.raises(InvalidArgumentException):
        build_generator(placeholder_ops(16, 5))


def test_generator_outputs_physical_statistics():
    ops = husimi_operators(make_square_grid(nx=16, ny=16), 8)
    generator = build_generator(ops, seed=2)
    out = generator.forward(np.random.default_rng(0).random((1, 256)))
    assert out.shape == (1, 256)
    assert out.max() == pytest.approx(1.0)
    rho = generator.activations[generator.index_of("density_matrix")][0]
    validate_density_matrix(rho)


def test_discriminator_layout():
    discriminator = build_discriminator(1024)
    dense = [layer for layer in discriminator.layers if layer.kind == "dense"]
    assert [layer.units for layer in dense] == [128, 128, 64, 64]
    assert dense[1].parameter_count == 16_512


def test_zero_final_layer_scores_one_half():
    discriminator = build_discriminator(8)
    last = discriminator.layers[-1]
    last.params["kernel"][...] = 0.0
    last.params["bias"][...] = 0.0
    z = discriminator.forward([np.ones((1, 8)), np.ones((1, 8))])
    assert patch_score(z)[0] == pytest.approx(0.5)


def test_input_gradient_matches_finite_differences():
    discriminator = build_discriminator(3, seed=4)
    rng = np.random.default_rng(16)
    x = rng.random((1, 6))

    def score() -> float:
        return float(patch_score(discriminator.forward([x[:, :3], x[:, 3:]]))[0])

    discriminator.forward([x[:, :3], x[:, 3:]])
    analytic = input_gradient(discriminator)
    assert relative_error(analytic, numerical_gradient(score, x)) < 1e-5


def test_gradient_penalty_parameter_gradients():
    discriminator = build_discriminator(3, seed=5)
    x = np.random.default_rng(17).random((2, 6))
    weight = 10.0

    def penalty() -> float:
        discriminator.forward([x[:, :3], x[:, 3:]])
        g = input_gradient(discriminator)
        return float(weight * np.mean((np.linalg.norm(g, axis=1) - 1.0) ** 2))

    discriminator.zero_grad()
    discriminator.forward([x[:, :3], x[:, 3:]])
    value = gradient_penalty(discriminator, x, weight)
    assert value == pytest.approx(penalty())

    picker = np.random.default_rng(18)
    for name, param, grad in discriminator.named_parameters():
        flat, flat_grad = param.reshape(-1), grad.reshape(-1)
        for index in picker.choice(flat.size, size=min(6, flat.size), replace=False):
            original = flat[index]
            flat[index] = original + 1e-6
            upper = penalty()
            flat[index] = original - 1e-6
            lower = penalty()
            flat[index] = original
            numeric = (upper - lower) / 2e-6
            assert flat_grad[index] == pytest.approx(numeric, rel=1e-4, abs=1e-7), name


# =============================================================================
# Adam
# =============================================================================

def test_learning_rate_schedule():
    schedule = ExponentialDecay()
    assert schedule(0) == pytest.approx(2e-4)
    assert schedule(1000) == pytest.approx(1.92e-4)


def test_zero_gradient_leaves_parameters_unchanged():
    param = np.array([1.0, -2.0])
    optimizer = Adam([param])
    optimizer.step([np.zeros(2)])
    np.testing.assert_array_equal(param, [1.0, -2.0])


def test_adam_minimizes_quadratic_bowl():
    w = np.array([1.0])
    optimizer = Adam([w], learning_rate=0.01, beta1=0.9, beta2=0.999, decay_rate=0.1, decay_steps=1000)
    for _ in range(2000):
        optimizer.step([2.0 * w])
    assert abs(w[0]) < 1e-3


def test_adam_rejects_bad_gradients():
    optimizer = Adam([np.zeros(3)])
    with pytest.raises(DivergenceException):
        optimizer.step([np.array([0.0, np.nan, 0.0])])
    with pytest.raises(ShapeMismatchException):
        optimizer.step([np.zeros(4)])
    with pytest.raises(ShapeMismatchException):
        optimizer.step([])


# =============================================================================
# Checkpoints
# =============================================================================

def small_network(seed: int) -> NetworkGraph:
    return NetworkGraph([Dense(5), LeakyReLU(), Dense(2)], (3,), seed=seed)


def test_checkpoint_round_trip(tmp_path):
    source = small_network(seed=1)
    path = save_checkpoint(tmp_path / "net.ckpt", source, metadata={"classes": ["a", "b"]})
    assert path.read_bytes().startswith(MAGIC)

    target = small_network(seed=2)
    metadata = load_checkpoint(path, target)
    assert metadata == {"classes": ["a", "b"]}
    for stored, loaded in zip(source.parameters(), target.parameters()):
        np.testing.assert_array_equal(stored, loaded)
    assert read_manifest(path)["layers"] == source.specs()


def test_checkpoint_rejects_other_networks(tmp_path):
    path = save_checkpoint(tmp_path / "net.ckpt", small_network(seed=1))
    with pytest.raises(ShapeMismatchException):
        load_checkpoint(path, NetworkGraph([Dense(4)], (3,)))


def test_checkpoint_errors(tmp_path):
    with pytest.raises(NotFoundException):
        load_checkpoint(tmp_path / "missing.ckpt", small_network(seed=0))
    bogus = tmp_path / "bogus.ckpt"
    bogus.write_bytes(b"NOTANN" + bytes(8))
    with pytest.raises(InvalidArgumentException):
        load_checkpoint(bogus, small_network(seed=0))
