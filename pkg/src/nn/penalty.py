"""
Patch-style similarity score and gradient penalty for dense discriminators.

The discriminator is a `NetworkGraph` of `Concat`, `Dense` and `LeakyReLU`
layers with raw outputs ``z``; its score is ``mean_k sigmoid(z_k)``. The
penalty ``lambda (||dD/dx|| - 1)^2`` needs second derivatives, which are
propagated by hand through the backward chain of the dense stack.
"""
import numpy as np

from src.core.exceptions import InvalidArgumentException
from src.nn.graph import NetworkGraph
from src.nn.layers import Array, Concat, Dense, LeakyReLU


def sigmoid(z: Array) -> Array:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def patch_score(z: Array) -> Array:
    """Mean of elementwise sigmoids per sample."""
    return sigmoid(z).mean(axis=1)


def patch_score_grad(z: Array, grad_score: Array) -> Array:
    """Back-propagate a per-sample score gradient to ``z``."""
    s = sigmoid(z)
    return grad_score[:, None] * s * (1.0 - s) / z.shape[1]


def _dense_chain(graph: NetworkGraph) -> list:
    chain = [layer for layer in graph.layers if not isinstance(layer, Concat)]
    for layer in chain:
        if not isinstance(layer, (Dense, LeakyReLU)):
            raise InvalidArgumentException(
                f"gradient penalty supports dense/leaky-relu discriminators, found '{layer.kind}'"
            )
    return chain


def gradient_penalty(graph: NetworkGraph, x: Array, weight: float) -> float:
    """
    Evaluate the penalty at the last forward input and accumulate its parameter gradients.

    ``graph.forward`` must have been called on ``x`` (the concatenated
    input) immediately before. Returns the batch-mean penalty value.
    """
    chain = _dense_chain(graph)
    z = graph.activations[-1]
    batch, outputs = z.shape
    s = sigmoid(z)

    # backward chain: u at each layer output, ending in g = dD/dx
    u = s * (1.0 - s) / outputs
    upstream: list[Array] = []
    for layer in reversed(chain):
        upstream.append(u)
        if isinstance(layer, Dense):
            u = u @ layer.params["kernel"].T
        else:
            u = u * layer.derivative()
    upstream.reverse()
    g = u

    norms = np.sqrt((g * g).sum(axis=1))
    value = float(weight * np.mean((norms - 1.0) ** 2))
    safe = np.where(norms > 0, norms, 1.0)
    e = (2.0 * weight / batch) * ((norms - 1.0) / safe)[:, None] * g

    # forward sweep of the penalty adjoint through the backward chain
    for layer, u_out in zip(chain, upstream):
        if isinstance(layer, Dense):
            layer.grads["kernel"] += e.T @ u_out
            e = e @ layer.params["kernel"]
        else:
            e = e * layer.derivative()

    grad_z = e * s * (1.0 - s) * (1.0 - 2.0 * s) / outputs
    graph.backward(grad_z)
    return value


def input_gradient(graph: NetworkGraph) -> Array:
    """``dD/dx`` at the last forward input, without touching parameter gradients."""
    chain = _dense_chain(graph)
    z = graph.activations[-1]
    s = sigmoid(z)
    u = s * (1.0 - s) / z.shape[1]
    for layer in reversed(chain):
        u = u @ layer.params["kernel"].T if isinstance(layer, Dense) else u * layer.derivative()
    return u
