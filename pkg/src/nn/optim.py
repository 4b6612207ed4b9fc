from dataclasses import dataclass
from typing import Sequence

import numpy as np

from src.core.exceptions import DivergenceException, ShapeMismatchException
from src.nn.layers import Array


@dataclass(frozen=True)
class ExponentialDecay:
    """Learning rate ``l(i) = l0 * C^(i / s)``."""

    initial: float = 2e-4
    decay_rate: float = 0.96
    decay_steps: int = 1000

    def __call__(self, step: int) -> float:
        return self.initial * self.decay_rate ** (step / self.decay_steps)


class Adam:
    """
    Adam with bias correction, updating parameter arrays in place.

    The rate for the ``i``-th step (counting from 0) comes from the schedule.
    """

    def __init__(
        self,
        params: Sequence[Array],
        learning_rate: float = 2e-4,
        beta1: float = 0.5,
        beta2: float = 0.5,
        epsilon: float = 1e-7,
        decay_rate: float = 0.96,
        decay_steps: int = 1000,
    ) -> None:
        self.params = list(params)
        self.schedule = ExponentialDecay(learning_rate, decay_rate, decay_steps)
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step_count = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[Array]) -> None:
        """
        Apply one update.

        Raises:
            ShapeMismatchException: If gradients do not align with parameters
            DivergenceException: If any gradient is NaN or infinite
        """
        if len(grads) != len(self.params):
            raise ShapeMismatchException("adam", len(self.params), len(grads))
        for index, grad in enumerate(grads):
            if grad.shape != self.params[index].shape:
                raise ShapeMismatchException("adam", self.params[index].shape, grad.shape)
            if not np.all(np.isfinite(grad)):
                raise DivergenceException(
                    f"non-finite gradient in parameter {index} at step {self.step_count}"
                )

        rate = self.schedule(self.step_count)
        self.step_count += 1
        t = self.step_count
        for param, grad, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad * grad
            m_hat = m / (1.0 - self.beta1 ** t)
            v_hat = v / (1.0 - self.beta2 ** t)
            param -= rate * m_hat / (np.sqrt(v_hat) + self.epsilon)
