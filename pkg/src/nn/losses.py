"""
Losses between observed data ``d`` and generated statistics ``d'``.

Each function returns ``(value, dL/dd')``. Cross-entropy and KL compare
the sum-normalized vectors as distributions, flooring probabilities at
``PROBABILITY_FLOOR`` inside the logarithm.
"""
from typing import Callable

import numpy as np

from src.core.config import get_settings
from src.core.exceptions import DegenerateException, ShapeMismatchException, UnknownKindException
from src.nn.layers import Array

LossFn = Callable[[Array, Array], tuple[float, Array]]


def _check(target: Array, prediction: Array) -> None:
    if target.shape != prediction.shape:
        raise ShapeMismatchException("loss", target.shape, prediction.shape)


def l1_loss(target: Array, prediction: Array) -> tuple[float, Array]:
    """Mean absolute error."""
    _check(target, prediction)
    diff = prediction - target
    return float(np.mean(np.abs(diff))), np.sign(diff) / diff.size


def l2_loss(target: Array, prediction: Array) -> tuple[float, Array]:
    """Mean squared error."""
    _check(target, prediction)
    diff = prediction - target
    return float(np.mean(diff ** 2)), 2.0 * diff / diff.size


def _distribution(values: Array, what: str) -> tuple[Array, float]:
    total = float(values.sum())
    if not total > 0:
        raise DegenerateException("degenerate-normalization", f"{what} has no positive mass")
    return values / total, total


def entropy(target: Array) -> float:
    """Shannon entropy of the sum-normalized target."""
    p, _ = _distribution(target, "data")
    positive = p[p > 0]
    return float(-(positive * np.log(positive)).sum())


def cross_entropy(target: Array, prediction: Array) -> tuple[float, Array]:
    """``-sum p log q`` with ``p = d / sum d`` and ``q = d' / sum d'``."""
    _check(target, prediction)
    floor = get_settings().PROBABILITY_FLOOR
    p, _ = _distribution(target, "data")
    q, total = _distribution(prediction, "generated statistics")
    live = q >= floor
    value = float(-(p * np.log(np.maximum(q, floor))).sum())
    weights = np.where(live, p / np.where(live, q, 1.0), 0.0)
    grad = ((weights * q).sum() - weights) / total
    return value, grad


def kl_divergence(target: Array, prediction: Array) -> tuple[float, Array]:
    """``KL(p || q) = CE(p, q) - H(p)``; zero iff the normalized vectors agree."""
    value, grad = cross_entropy(target, prediction)
    return value - entropy(target), grad


LOSSES: dict[str, LossFn] = {
    "L1": l1_loss,
    "L2": l2_loss,
    "CE": cross_entropy,
    "KL": kl_divergence,
}


def get_loss(name: str) -> LossFn:
    if name not in LOSSES:
        raise UnknownKindException("loss", name)
    return LOSSES[name]


def softmax_cross_entropy(logits: Array, labels: Array) -> tuple[float, Array]:
    """Batch-mean categorical cross-entropy of integer labels against logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    rows = np.arange(logits.shape[0])
    value = float(-log_probs[rows, labels].mean())
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    return value, grad / logits.shape[0]
