"""
Ordered layer chain with a cached forward pass and reverse-mode backward pass.
"""
from typing import Any, Iterator, Optional, Sequence, Union

import numpy as np

from src.core.exceptions import InvalidArgumentException, ShapeMismatchException, UnknownKindException
from src.core.logging import get_logger
from src.nn.layers import (
    Array,
    Concat,
    Conv2D,
    Conv2DTranspose,
    Dense,
    Dropout,
    Flatten,
    GaussianConv,
    GaussianNoise,
    InstanceNorm,
    Layer,
    LeakyReLU,
    Reshape,
    Shape,
    Softmax,
)
from src.nn.quantum_layers import DensityMatrixLayer, ExpectationLayer, UnitMax

logger = get_logger(__name__)

LAYER_TYPES: dict[str, type[Layer]] = {
    cls.kind: cls
    for cls in (
        Dense, Conv2D, Conv2DTranspose, InstanceNorm, LeakyReLU, Softmax, Dropout,
        GaussianNoise, GaussianConv, Reshape, Flatten, Concat,
        DensityMatrixLayer, ExpectationLayer, UnitMax,
    )
}

Inputs = Union[Array, Sequence[Array]]


class NetworkGraph:
    """
    A sequential network built for a fixed per-sample input shape.

    Weight initialization and training-time randomness (dropout masks,
    noise layers) are drawn from two independent streams spawned from
    ``seed``, so a graph is fully reproducible from its seed.
    """

    def __init__(
        self,
        layers: Sequence[Layer],
        input_shape: Union[Shape, Sequence[Shape]],
        seed: int = 0,
        name: str = "network",
    ) -> None:
        if not layers:
            raise InvalidArgumentException("a network needs at least one layer")
        self.name = name
        self.layers = list(layers)
        self.seed = seed
        init_seq, run_seq = np.random.SeedSequence(seed).spawn(2)
        self.rng = np.random.default_rng(run_seq)
        init_rng = np.random.default_rng(init_seq)

        self.input_shape = input_shape
        shape = input_shape
        for index, layer in enumerate(self.layers):
            if isinstance(layer, Concat) and index != 0:
                raise ShapeMismatchException(layer.name, "concat as the first layer", f"position {index}")
            if layer.name == layer.kind:
                layer.name = f"{layer.kind}_{index}"
            shape = layer.build(shape, init_rng)
        self.output_shape = shape
        self.activations: list[Array] = []

    # -- execution -------------------------------------------------------

    def forward(self, inputs: Inputs, training: bool = False) -> Array:
        """
        Run all layers, caching each layer's output in `activations`.

        Raises:
            ShapeMismatchException: If the input does not match the first layer
        """
        x = inputs
        self.activations = []
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=self.rng)
            self.activations.append(x)
        return x

    __call__ = forward

    def backward(self, grad: Array, to_layer: int = 0) -> Any:
        """
        Back-propagate an output gradient, accumulating parameter gradients.

        Stops at the input of ``layers[to_layer]`` and returns the gradient
        there (a list of arrays when that layer is a `Concat`).
        """
        for layer in reversed(self.layers[to_layer:]):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    # -- parameters ------------------------------------------------------

    def named_parameters(self) -> Iterator[tuple[str, Array, Array]]:
        """(qualified name, parameter, gradient) in layer order."""
        for layer in self.layers:
            for key, value in layer.params.items():
                yield f"{layer.name}.{key}", value, layer.grads[key]

    def parameters(self) -> list[Array]:
        return [value for _, value, _ in self.named_parameters()]

    def gradients(self) -> list[Array]:
        return [grad for _, _, grad in self.named_parameters()]

    @property
    def parameter_count(self) -> int:
        return sum(layer.parameter_count for layer in self.layers)

    def specs(self) -> list[dict[str, Any]]:
        return [layer.spec() for layer in self.layers]

    def index_of(self, kind: str, last: bool = True) -> int:
        """Position of the first or last layer of a kind."""
        positions = [i for i, layer in enumerate(self.layers) if layer.kind == kind]
        if not positions:
            raise UnknownKindException("layer in network", kind)
        return positions[-1] if last else positions[0]

    # -- construction ----------------------------------------------------

    @classmethod
    def from_specs(
        cls,
        specs: Sequence[dict[str, Any]],
        input_shape: Union[Shape, Sequence[Shape]],
        seed: int = 0,
        operators: Optional[Array] = None,
        name: str = "network",
    ) -> "NetworkGraph":
        """
        Rebuild a graph from `specs` output.

        Expectation layers take their operators from ``operators``; they
        are never serialized.
        """
        layers: list[Layer] = []
        for spec in specs:
            kind = spec.get("kind")
            if kind not in LAYER_TYPES:
                raise UnknownKindException("layer kind", str(kind))
            config = dict(spec.get("config", {}))
            if kind == ExpectationLayer.kind:
                if operators is None:
                    raise InvalidArgumentException("an expectation layer needs its measurement operators")
                layer = ExpectationLayer(operators, name=spec.get("name"))
            else:
                layer = LAYER_TYPES[kind](**config, name=spec.get("name"))
            layers.append(layer)
        return cls(layers, input_shape, seed=seed, name=name)
