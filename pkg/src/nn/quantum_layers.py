"""
Layers that map network outputs to physical states and measurement statistics.

Gradients with respect to complex tensors follow the convention
``G = dL/dRe(z) + i dL/dIm(z)`` for a real loss ``L``.
"""
from typing import Optional

import numpy as np

from src.core.config import get_settings
from src.core.exceptions import DegenerateException, ShapeMismatchException
from src.nn.layers import Array, Layer, Shape


class DensityMatrixLayer(Layer):
    """
    Raw (N, N, 2) tensor to a density matrix.

    Channel 0 gives the real lower triangle including the diagonal,
    channel 1 the imaginary strictly-lower triangle. The factor ``T`` is
    mapped to ``(T^dagger T + eps I) / tr(T^dagger T + eps I)``.
    """

    kind = "density_matrix"

    def __init__(self, epsilon: Optional[float] = None, name: Optional[str] = None) -> None:
        super().__init__(name)
        self.epsilon = get_settings().CHOLESKY_EPSILON if epsilon is None else epsilon

    def compute_output_shape(self, input_shape: Shape) -> Shape:
        if len(input_shape) != 3 or input_shape[0] != input_shape[1] or input_shape[2] != 2:
            raise ShapeMismatchException(self.name, "(N, N, 2)", input_shape)
        return input_shape[0], input_shape[1]

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        dim = x.shape[1]
        factor = np.tril(x[..., 0]) + 1j * np.tril(x[..., 1], k=-1)
        gram = np.conj(np.swapaxes(factor, 1, 2)) @ factor + self.epsilon * np.eye(dim)
        trace = np.trace(gram, axis1=1, axis2=2).real
        if np.any(trace <= 0):
            raise DegenerateException("degenerate-factor", f"layer '{self.name}' produced a zero-trace factor")
        rho = gram / trace[:, None, None]
        rho = 0.5 * (rho + np.conj(np.swapaxes(rho, 1, 2)))
        self._factor, self._gram, self._trace = factor, gram, trace
        return rho

    def backward(self, grad):
        factor, gram, trace = self._factor, self._gram, self._trace
        grad = 0.5 * (grad + np.conj(np.swapaxes(grad, 1, 2)))
        overlap = np.einsum("bij,bij->b", np.conj(grad), gram).real
        dim = factor.shape[1]
        grad_gram = grad / trace[:, None, None] - (overlap / trace ** 2)[:, None, None] * np.eye(dim)
        grad_factor = factor @ (grad_gram + np.conj(np.swapaxes(grad_gram, 1, 2)))
        raw = np.empty(factor.shape + (2,), dtype=np.float64)
        raw[..., 0] = np.tril(grad_factor.real)
        raw[..., 1] = np.tril(grad_factor.imag, k=-1)
        return raw

    def config(self):
        return {"epsilon": self.epsilon}


class ExpectationLayer(Layer):
    """
    ``d_i = Re tr(O_i rho)`` for a fixed stack of Hermitian operators.
    """

    kind = "expectation"

    def __init__(self, operators: Array, name: Optional[str] = None) -> None:
        super().__init__(name)
        operators = np.asarray(operators, dtype=np.complex128)
        if operators.ndim != 3 or operators.shape[1] != operators.shape[2]:
            raise ShapeMismatchException(self.name, "(n, N, N) operators", operators.shape)
        self.operators = operators
        dim = operators.shape[1]
        self._flat = operators.reshape(operators.shape[0], dim * dim)

    def compute_output_shape(self, input_shape):
        dim = self.operators.shape[1]
        if tuple(input_shape) != (dim, dim):
            raise ShapeMismatchException(self.name, (dim, dim), input_shape)
        return (self.operators.shape[0],)

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        rho_t = np.swapaxes(x, 1, 2).reshape(x.shape[0], -1)
        return (rho_t @ self._flat.T).real

    def backward(self, grad):
        dim = self.operators.shape[1]
        grad_t = (grad @ np.conj(self._flat)).reshape(grad.shape[0], dim, dim)
        return np.swapaxes(grad_t, 1, 2)

    def config(self):
        return {"operators": int(self.operators.shape[0]), "cutoff": int(self.operators.shape[1])}


class UnitMax(Layer):
    """Divide each sample by its maximum, mirroring unit-max data normalization."""

    kind = "unit_max"

    def forward(self, x, training=False, rng=None):
        self._check_input(x)
        self._argmax = np.argmax(x, axis=1)
        self._peak = x[np.arange(x.shape[0]), self._argmax]
        if np.any(self._peak <= 0):
            raise DegenerateException("degenerate-normalization", f"layer '{self.name}' got data with no positive value")
        self._x = x
        return x / self._peak[:, None]

    def backward(self, grad):
        peak = self._peak[:, None]
        dx = grad / peak
        rows = np.arange(grad.shape[0])
        dx[rows, self._argmax] -= (grad * self._x).sum(axis=1) / self._peak ** 2
        return dx
