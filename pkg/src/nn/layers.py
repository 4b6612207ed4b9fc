"""
Differentiable layers with explicit forward and backward passes.

Tensors are ``numpy`` arrays with the batch as the leading axis. Image
tensors use (batch, height, width, channels) layout. Each layer caches
what its backward pass needs during `forward`; parameter gradients
accumulate until `zero_grad`.
"""
import math
from typing import Any, ClassVar, Optional, Sequence

import numpy as np
import numpy.typing as npt

from src.core.exceptions import InvalidArgumentException, ShapeMismatchException
from src.nn.shapes import Padding, conv_output_size, conv_transpose_output_size, same_padding
from src.physics.noise import convolve_image, gaussian_kernel

Array = npt.NDArray[Any]
Shape = tuple[int, ...]

LEAKY_SLOPE = 0.3
INSTANCE_NORM_EPSILON = 1e-5


def glorot_uniform(shape: Shape, fan_in: int, fan_out: int, rng: np.random.Generator) -> Array:
    """Uniform in ``[-sqrt(6 / (fan_in + fan_out)), +sqrt(6 / (fan_in + fan_out))]``."""
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    """Base class: shape bookkeeping, parameters and gradient buffers."""

    kind: ClassVar[str] = "layer"

    def __init__(self, name: Optional[str] = None) -> None:
        self.name = name or self.kind
        self.params: dict[str, Array] = {}
        self.grads: dict[str, Array] = {}
        self.input_shape: Optional[Shape] = None
        self.output_shape: Optional[Shape] = None

    # -- construction ----------------------------------------------------

    def build(self, input_shape: Shape, rng: np.random.Generator) -> Shape:
        """Allocate parameters for a per-sample input shape and return the output shape."""
        self.input_shape = tuple(input_shape)
        self.output_shape = tuple(self.compute_output_shape(self.input_shape))
        self.init_params(rng)
        return self.output_shape

    def compute_output_shape(self, input_shape: Shape) -> Shape:
        return input_shape

    def init_params(self, rng: np.random.Generator) -> None:
        pass

    def add_param(self, key: str, value: Array) -> None:
        self.params[key] = np.asarray(value, dtype=np.float64)
        self.grads[key] = np.zeros_like(self.params[key])

    def _expect_rank(self, input_shape: Shape, rank: int) -> None:
        if len(input_shape) != rank:
            raise ShapeMismatchException(self.name, f"rank-{rank} per-sample input", input_shape)

    # -- execution -------------------------------------------------------

    def _check_input(self, x: Array) -> None:
        if self.input_shape is not None and tuple(x.shape[1:]) != self.input_shape:
            raise ShapeMismatchException(self.name, self.input_shape, tuple(x.shape[1:]))

    def forward(self, x: Array, training: bool = False, rng: Optional[np.random.Generator] = None) -> Array:
        raise NotImplementedError

    def backward(self, grad: Array) -> Array:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for grad in self.grads.values():
            grad.fill(0.0)

    # -- description -----------------------------------------------------

    @property
    def parameter_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def config(self) -> dict[str, Any]:
        return {}

    def spec(self) -> dict[str, Any]:
        """JSON-ready description: kind, configuration, shapes and parameter shapes."""
        return {
            "kind": self.kind,
            "name": self.name,
            "config": self.config(),
            "output_shape": list(self.output_shape or ()),
            "params": {key: list(value.shape) for key, value in self.params.items()},
        }


# =============================================================================
# Dense and convolution
# =============================================================================

class Dense(Layer):
    """``y = x W + b`` on flat inputs."""

    kind = "dense"

    def __init__(self, units: int, use_bias: bool = True, name: Optional[str] = None) -> None:
        super().__init__(name)
        self.units = int(units)
        self.use_bias = use_bias

    def compute_output_shape(self, input_shape: Shape) -> Shape:
        self._expect_rank(input_shape, 1)
        return (self.units,)

    def init_params(self, rng: np.random.Generator) -> None:
        fan_in = self.input_shape[0]
        self.add_param("kernel", glorot_uniform((fan_in, self.units), fan_in, self.units, rng))
        if self.use_bias:
            self.add_param("bias", np.zeros(self.units))

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        self._x = x
        y = x @ self.params["kernel"]
        if self.use_bias:
            y = y + self.params["bias"]
        return y

    def backward(self, grad):
        self.grads["kernel"] += self._x.T @ grad
        if self.use_bias:
            self.grads["bias"] += grad.sum(axis=0)
        return grad @ self.params["kernel"].T

    def config(self):
        return {"units": self.units, "use_bias": self.use_bias}


def _strided(start: int, stride: int, count: int) -> slice:
    return slice(start, start + stride * (count - 1) + 1, stride)


class Conv2D(Layer):
    """Square-kernel 2D convolution, looping over kernel offsets."""

    kind = "conv2d"

    def __init__(
        self,
        filters: int,
        kernel_size: int,
        stride: int = 1,
        padding: Padding = "valid",
        use_bias: bool = False,
        name: Optional[str] = None,
    ) -> None:
        super().__init__(name)
        self.filters = int(filters)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        self.padding = padding
        self.use_bias = use_bias

    def compute_output_shape(self, input_shape):
        self._expect_rank(input_shape, 3)
        height, width, _ = input_shape
        try:
            out_h = conv_output_size(height, self.kernel_size, self.stride, self.padding)
            out_w = conv_output_size(width, self.kernel_size, self.stride, self.padding)
        except InvalidArgumentException as exc:
            raise ShapeMismatchException(self.name, f"extent >= {self.kernel_size}", input_shape) from exc
        if self.padding == "same":
            self._pads = (same_padding(height, self.kernel_size, self.stride),
                          same_padding(width, self.kernel_size, self.stride))
        else:
            self._pads = ((0, 0), (0, 0))
        return out_h, out_w, self.filters

    def init_params(self, rng):
        k, channels = self.kernel_size, self.input_shape[2]
        shape = (k, k, channels, self.filters)
        self.add_param("kernel", glorot_uniform(shape, k * k * channels, k * k * self.filters, rng))
        if self.use_bias:
            self.add_param("bias", np.zeros(self.filters))

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        (top, bottom), (left, right) = self._pads
        xp = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))
        out_h, out_w, _ = self.output_shape
        kernel = self.params["kernel"]
        out = np.zeros((x.shape[0], out_h, out_w, self.filters), dtype=np.result_type(x, kernel))
        for i in range(self.kernel_size):
            for j in range(self.kernel_size):
                window = xp[:, _strided(i, self.stride, out_h), _strided(j, self.stride, out_w), :]
                out += window @ kernel[i, j]
        if self.use_bias:
            out += self.params["bias"]
        self._xp = xp
        return out

    def backward(self, grad):
        (top, _), (left, _) = self._pads
        out_h, out_w, _ = self.output_shape
        kernel = self.params["kernel"]
        dxp = np.zeros_like(self._xp, dtype=np.result_type(self._xp, grad))
        for i in range(self.kernel_size):
            for j in range(self.kernel_size):
                rows, cols = _strided(i, self.stride, out_h), _strided(j, self.stride, out_w)
                window = self._xp[:, rows, cols, :]
                self.grads["kernel"][i, j] += np.tensordot(window, grad, axes=([0, 1, 2], [0, 1, 2]))
                dxp[:, rows, cols, :] += grad @ kernel[i, j].T
        if self.use_bias:
            self.grads["bias"] += grad.sum(axis=(0, 1, 2))
        height, width, _ = self.input_shape
        return dxp[:, top:top + height, left:left + width, :]

    def config(self):
        return {
            "filters": self.filters,
            "kernel_size": self.kernel_size,
            "stride": self.stride,
            "padding": self.padding,
            "use_bias": self.use_bias,
        }


class Conv2DTranspose(Conv2D):
    """
    Transpose convolution: scatter each input pixel through the kernel.

    The full ``(in - 1) s + k`` output is cropped to ``in * s`` for 'same'
    padding, dropping ``(k - s) // 2`` leading cells.
    """

    kind = "conv2d_transpose"

    def __init__(self, filters, kernel_size, stride=1, padding: Padding = "same", use_bias=False, name=None):
        super().__init__(filters, kernel_size, stride, padding, use_bias, name)

    def compute_output_shape(self, input_shape):
        self._expect_rank(input_shape, 3)
        height, width, _ = input_shape
        out_h = conv_transpose_output_size(height, self.kernel_size, self.stride, self.padding)
        out_w = conv_transpose_output_size(width, self.kernel_size, self.stride, self.padding)
        full_h = (height - 1) * self.stride + self.kernel_size
        full_w = (width - 1) * self.stride + self.kernel_size
        self._crop = (max(full_h - out_h, 0) // 2, max(full_w - out_w, 0) // 2)
        self._buffer = (max(full_h, self._crop[0] + out_h), max(full_w, self._crop[1] + out_w))
        return out_h, out_w, self.filters

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        height, width, _ = self.input_shape
        kernel = self.params["kernel"]
        full = np.zeros((x.shape[0], *self._buffer, self.filters), dtype=np.result_type(x, kernel))
        for i in range(self.kernel_size):
            for j in range(self.kernel_size):
                full[:, _strided(i, self.stride, height), _strided(j, self.stride, width), :] += x @ kernel[i, j]
        out_h, out_w, _ = self.output_shape
        top, left = self._crop
        out = full[:, top:top + out_h, left:left + out_w, :]
        if self.use_bias:
            out = out + self.params["bias"]
        self._x = x
        return out

    def backward(self, grad):
        height, width, _ = self.input_shape
        out_h, out_w, _ = self.output_shape
        top, left = self._crop
        kernel = self.params["kernel"]
        full = np.zeros((grad.shape[0], *self._buffer, self.filters), dtype=grad.dtype)
        full[:, top:top + out_h, left:left + out_w, :] = grad
        dx = np.zeros_like(self._x, dtype=np.result_type(self._x, grad))
        for i in range(self.kernel_size):
            for j in range(self.kernel_size):
                window = full[:, _strided(i, self.stride, height), _strided(j, self.stride, width), :]
                self.grads["kernel"][i, j] += np.tensordot(self._x, window, axes=([0, 1, 2], [0, 1, 2]))
                dx += window @ kernel[i, j].T
        if self.use_bias:
            self.grads["bias"] += grad.sum(axis=(0, 1, 2))
        return dx


class InstanceNorm(Layer):
    """Per-sample, per-channel normalization over the spatial axes with scale and shift."""

    kind = "instance_norm"

    def __init__(self, epsilon: float = INSTANCE_NORM_EPSILON, name: Optional[str] = None) -> None:
        super().__init__(name)
        self.epsilon = epsilon

    def compute_output_shape(self, input_shape):
        self._expect_rank(input_shape, 3)
        return input_shape

    def init_params(self, rng):
        channels = self.input_shape[2]
        self.add_param("gamma", np.ones(channels))
        self.add_param("beta", np.zeros(channels))

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        mean = x.mean(axis=(1, 2), keepdims=True)
        var = x.var(axis=(1, 2), keepdims=True)
        self._inv_std = 1.0 / np.sqrt(var + self.epsilon)
        self._xhat = (x - mean) * self._inv_std
        return self.params["gamma"] * self._xhat + self.params["beta"]

    def backward(self, grad):
        xhat = self._xhat
        self.grads["gamma"] += (grad * xhat).sum(axis=(0, 1, 2))
        self.grads["beta"] += grad.sum(axis=(0, 1, 2))
        dxhat = grad * self.params["gamma"]
        count = xhat.shape[1] * xhat.shape[2]
        return (self._inv_std / count) * (
            count * dxhat
            - dxhat.sum(axis=(1, 2), keepdims=True)
            - xhat * (dxhat * xhat).sum(axis=(1, 2), keepdims=True)
        )

    def config(self):
        return {"epsilon": self.epsilon}


# =============================================================================
# Activations and regularizers
# =============================================================================

class LeakyReLU(Layer):
    kind = "leaky_relu"

    def __init__(self, slope: float = LEAKY_SLOPE, name: Optional[str] = None) -> None:
        super().__init__(name)
        self.slope = slope

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        self._positive = x > 0
        return np.where(self._positive, x, self.slope * x)

    def derivative(self) -> Array:
        """Elementwise slope at the cached input."""
        return np.where(self._positive, 1.0, self.slope)

    def backward(self, grad):
        return grad * self.derivative()

    def config(self):
        return {"slope": self.slope}


def softmax(logits: Array) -> Array:
    """Row-wise softmax, stable under constant shifts of the logits."""
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exps = np.exp(shifted)
    return exps / exps.sum(axis=-1, keepdims=True)


class Softmax(Layer):
    kind = "softmax"

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        self._y = softmax(x)
        return self._y

    def backward(self, grad):
        y = self._y
        return y * (grad - (grad * y).sum(axis=-1, keepdims=True))


def _require_rng(layer: Layer, rng: Optional[np.random.Generator]) -> np.random.Generator:
    if rng is None:
        raise InvalidArgumentException(f"layer '{layer.name}' needs a random generator in training mode")
    return rng


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by ``1 / (1 - rate)`` at train time."""

    kind = "dropout"

    def __init__(self, rate: float, name: Optional[str] = None) -> None:
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise InvalidArgumentException(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        if not training or self.rate == 0.0:
            self._scale = None
            return x
        keep = _require_rng(self, rng).random(x.shape) >= self.rate
        self._scale = keep / (1.0 - self.rate)
        return x * self._scale

    def backward(self, grad):
        return grad if self._scale is None else grad * self._scale

    def config(self):
        return {"rate": self.rate}


class GaussianNoise(Layer):
    """Additive ``N(0, stddev)`` noise in training mode, resampled every call."""

    kind = "gaussian_noise"

    def __init__(self, stddev: float, name: Optional[str] = None) -> None:
        super().__init__(name)
        self.stddev = stddev

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        if not training or self.stddev == 0.0:
            return x
        return x + _require_rng(self, rng).normal(0.0, self.stddev, size=x.shape)

    def backward(self, grad):
        return grad

    def config(self):
        return {"stddev": self.stddev}


class GaussianConv(Layer):
    """
    Fixed thermal-kernel convolution of flattened square-grid data.

    The backward pass correlates with the kernel (convolution with the
    flipped kernel).
    """

    kind = "gaussian_conv"

    def __init__(self, n_th: float, grid_shape: tuple[int, int], spacing: tuple[float, float], name: Optional[str] = None) -> None:
        super().__init__(name)
        self.n_th = n_th
        self.grid_shape = (int(grid_shape[0]), int(grid_shape[1]))
        self.spacing = (float(spacing[0]), float(spacing[1]))
        ny, nx = self.grid_shape
        self.kernel = gaussian_kernel(n_th, self.spacing, max_half_width=(nx - 1, ny - 1))

    def compute_output_shape(self, input_shape):
        ny, nx = self.grid_shape
        if tuple(input_shape) != (ny * nx,):
            raise ShapeMismatchException(self.name, (ny * nx,), input_shape)
        return input_shape

    def _apply(self, x: Array, kernel: Array) -> Array:
        images = x.reshape((x.shape[0], *self.grid_shape))
        return np.stack([convolve_image(image, kernel) for image in images]).reshape(x.shape)

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        return self._apply(x, self.kernel)

    def backward(self, grad):
        return self._apply(grad, self.kernel[::-1, ::-1])

    def config(self):
        return {"n_th": self.n_th, "grid_shape": list(self.grid_shape), "spacing": list(self.spacing)}


# =============================================================================
# Shape plumbing
# =============================================================================

class Reshape(Layer):
    kind = "reshape"

    def __init__(self, target_shape: Sequence[int], name: Optional[str] = None) -> None:
        super().__init__(name)
        self.target_shape = tuple(int(v) for v in target_shape)

    def compute_output_shape(self, input_shape):
        if math.prod(input_shape) != math.prod(self.target_shape):
            raise ShapeMismatchException(self.name, f"{math.prod(self.target_shape)} values", input_shape)
        return self.target_shape

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        return x.reshape((x.shape[0], *self.target_shape))

    def backward(self, grad):
        return grad.reshape((grad.shape[0], *self.input_shape))

    def config(self):
        return {"target_shape": list(self.target_shape)}


class Flatten(Layer):
    kind = "flatten"

    def compute_output_shape(self, input_shape):
        return (math.prod(input_shape),)

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        return x.reshape((x.shape[0], -1))

    def backward(self, grad):
        return grad.reshape((grad.shape[0], *self.input_shape))


class Concat(Layer):
    """Joins several flat inputs; only valid as the first layer of a graph."""

    kind = "concat"

    def build(self, input_shape, rng):
        shapes = [tuple(shape) for shape in input_shape]
        for shape in shapes:
            self._expect_rank(shape, 1)
        self.input_shape = tuple(shapes)
        self._sizes = [shape[0] for shape in shapes]
        self.output_shape = (sum(self._sizes),)
        return self.output_shape

    def _check_input(self, x):
        got = tuple(tuple(part.shape[1:]) for part in x)
        if got != self.input_shape:
            raise ShapeMismatchException(self.name, self.input_shape, got)

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        return np.concatenate(list(x), axis=1)

    def backward(self, grad):
        return np.split(grad, np.cumsum(self._sizes)[:-1], axis=1)
