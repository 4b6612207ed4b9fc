"""
Convolutional state classifier on unit-max Husimi images.

Training uses per-epoch affine augmentation and additive noise drawn from
the training seed; evaluation reports a row-normalized confusion matrix,
accuracy and one-vs-rest ROC-AUC; Grad-CAM attributes a class score to
the last convolution's feature maps.
"""
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, ndimage

from src.core.exceptions import (
    DivergenceException,
    InvalidArgumentException,
    ShapeMismatchException,
    UnknownKindException,
)
from src.core.logging import get_logger
from src.nn.checkpoint import load_checkpoint, read_manifest, save_checkpoint
from src.nn.graph import NetworkGraph
from src.nn.layers import Conv2D, Dense, Dropout, Flatten, GaussianNoise, LeakyReLU, softmax
from src.nn.losses import softmax_cross_entropy
from src.nn.optim import Adam
from src.physics import noise
from src.physics.measure import DataVector, Normalization, normalize_unit_max
from src.schemas.config_schema import ClassifierConfig
from src.schemas.measurement_schema import DataSpec
from src.schemas.report_schema import EvaluationReport, TrainingHistory
from src.services.dataset_service import plan_recipe, render_all

logger = get_logger(__name__)

MIN_INPUT = 16
FULL_SCALE_TRAIN = 43_762
FULL_SCALE_TEST = 8_670


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """A unit-max image and the index of its class."""

    image: np.ndarray  # (ny, nx)
    label: int
    name: str = ""

    def one_hot(self, n_classes: int) -> np.ndarray:
        target = np.zeros(n_classes)
        target[self.label] = 1.0
        return target


@dataclass
class GradCamResult:
    heatmap: np.ndarray
    target_class: int
    flags: list[str] = field(default_factory=list)

    @property
    def degenerate(self) -> bool:
        return "degenerate-gradcam" in self.flags


# =============================================================================
# Network
# =============================================================================

def build_classifier(
    input_hw: tuple[int, int],
    n_classes: int,
    config: Optional[ClassifierConfig] = None,
    seed: int = 0,
) -> NetworkGraph:
    """
    Six convolutions (32,3,1)(32,3,1)(32,5,2)(64,3,1)(64,3,1)(64,5,2), then dense 512, 256, n_classes.

    The stride-1 convolutions use valid padding and the stride-2 ones same
    padding, so a 32x32 input leaves 5x5x64 features. The first dense
    layer is sized from the actual flatten length. Outputs are logits.

    Raises:
        InvalidArgumentException: If the input is smaller than 16x16 or n_classes < 2
    """
    config = config or ClassifierConfig()
    height, width = input_hw
    if height < MIN_INPUT or width < MIN_INPUT:
        raise InvalidArgumentException(f"classifier input must be at least {MIN_INPUT}x{MIN_INPUT}, got {height}x{width}")
    if n_classes < 2:
        raise InvalidArgumentException(f"a classifier needs at least 2 classes, got {n_classes}")

    rate, sigma = config.dropout, config.internal_noise
    layers = [
        Conv2D(32, 3, 1, "valid"), LeakyReLU(),
        Conv2D(32, 3, 1, "valid"), LeakyReLU(), Dropout(rate), GaussianNoise(sigma),
        Conv2D(32, 5, 2, "same"), LeakyReLU(),
        Conv2D(64, 3, 1, "valid"), LeakyReLU(), Dropout(rate), GaussianNoise(sigma),
        Conv2D(64, 3, 1, "valid"), LeakyReLU(),
        Conv2D(64, 5, 2, "same"), LeakyReLU(), Dropout(rate),
        Flatten(),
        Dense(512), LeakyReLU(), Dropout(rate),
        Dense(256), LeakyReLU(),
        Dense(n_classes),
    ]
    return NetworkGraph(layers, (height, width, 1), seed=seed, name="classifier")


def _batch(images: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(image, dtype=np.float64) for image in images])[..., None]


# =============================================================================
# Data
# =============================================================================

def sample_counts(config: ClassifierConfig) -> tuple[int, int]:
    """(train, test) samples per class."""
    if config.full_scale:
        n = len(config.classes)
        return -(-FULL_SCALE_TRAIN // n), -(-FULL_SCALE_TEST // n)
    return config.train_per_class, config.test_per_class


def make_labeled_dataset(
    config: ClassifierConfig,
    per_class: int,
    seed: int,
    threads: Optional[int] = None,
) -> list[LabeledSample]:
    """
    Per class: random in-range parameters, mixed with a random state at
    ``sigma ~ U[0, mix_sigma_max]``, Husimi on the configured grid, unit-max.
    """
    items = plan_recipe(
        config.classes,
        per_class,
        config.cutoff,
        seed,
        mix_sigma_max=config.mix_sigma_max,
        mix_density=config.mix_density,
    )
    data_spec = DataSpec(function="husimi", grid=config.grid, unit_max=True)
    vectors = render_all(items, data_spec, threads)
    return [
        LabeledSample(image=vector.as_image(), label=config.classes.index(item.label), name=item.label)
        for item, vector in zip(items, vectors)
    ]


def samples_from_data(vectors: Sequence[DataVector], labels: Sequence[str], classes: Sequence[str]) -> list[LabeledSample]:
    """Labeled samples from stored data vectors, unit-max normalizing raw data."""
    samples = []
    for vector, name in zip(vectors, labels):
        if name not in classes:
            raise UnknownKindException("class", name)
        vector = normalize_unit_max(vector) if vector.normalization is Normalization.RAW else vector
        samples.append(LabeledSample(image=vector.as_image(), label=list(classes).index(name), name=name))
    return samples


def augment(image: np.ndarray, rng: np.random.Generator, noise_max: float, use_affine: bool = True) -> np.ndarray:
    """One random affine transform followed by additive noise with ``sigma_G ~ U[0, noise_max]``."""
    if use_affine:
        image = noise.affine_augment(image, seed=int(rng.integers(0, 2**31 - 1)))
    if noise_max > 0:
        image = image + rng.normal(0.0, rng.uniform(0.0, noise_max), size=image.shape)
    return image


# =============================================================================
# Training and inference
# =============================================================================

def train_classifier(
    graph: NetworkGraph,
    samples: Sequence[LabeledSample],
    config: Optional[ClassifierConfig] = None,
    seed: Optional[int] = None,
) -> TrainingHistory:
    """
    Mini-batch Adam on the batch-mean softmax cross-entropy.

    Each epoch reshuffles the samples and redraws their augmentation from
    a generator spawned from ``seed``, so a run is reproducible bit for bit.

    Raises:
        InvalidArgumentException: If there are no samples
        DivergenceException: If the loss becomes non-finite
    """
    config = config or ClassifierConfig()
    if not samples:
        raise InvalidArgumentException("cannot train on an empty dataset")
    seed = config.seed if seed is None else seed
    labels = np.asarray([sample.label for sample in samples])
    optimizer = Adam(graph.parameters(), **config.optimizer.model_dump())
    history = TrainingHistory()

    for epoch, epoch_seq in enumerate(np.random.SeedSequence(seed).spawn(config.epochs), start=1):
        rng = np.random.default_rng(epoch_seq)
        order = rng.permutation(len(samples))
        images = [
            augment(samples[i].image, rng, config.train_noise_max, config.augment)
            for i in order
        ]
        total_loss, correct = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch_index = order[start:start + config.batch_size]
            x = _batch(images[start:start + config.batch_size])
            y = labels[batch_index]

            graph.zero_grad()
            logits = graph.forward(x, training=True)
            loss, grad = softmax_cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise DivergenceException(
                    f"classifier loss is {loss} at epoch {epoch}, batch starting at {start}; "
                    f"max |logit| = {np.max(np.abs(logits)):.3g}"
                )
            graph.backward(grad)
            optimizer.step(graph.gradients())
            total_loss += loss * len(batch_index)
            correct += int((logits.argmax(axis=1) == y).sum())

        history.loss.append(total_loss / len(order))
        history.accuracy.append(correct / len(order))
        logger.info("epoch %d/%d: loss=%.5f accuracy=%.4f", epoch, config.epochs, history.loss[-1], history.accuracy[-1])
    return history


def predict_batch(graph: NetworkGraph, images: Sequence[np.ndarray]) -> np.ndarray:
    """Class probabilities, one row per image."""
    x = _batch(images)
    expected = tuple(graph.input_shape)
    if x.shape[1:] != expected:
        raise ShapeMismatchException("classifier input", expected, x.shape[1:])
    return softmax(graph.forward(x, training=False))


def predict(graph: NetworkGraph, image: np.ndarray) -> np.ndarray:
    """Class probabilities of one image; the label is their argmax."""
    return predict_batch(graph, [image])[0]


# =============================================================================
# Evaluation
# =============================================================================

def roc_auc(scores: np.ndarray, positives: np.ndarray) -> Optional[float]:
    """
    Area under the ROC curve swept over every distinct score threshold.

    Returns None when either class is absent.
    """
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    n_pos, n_neg = int(positives.sum()), int((~positives).sum())
    if n_pos == 0 or n_neg == 0:
        return None
    thresholds = np.unique(scores)[::-1]
    tpr = [0.0] + [float((scores[positives] >= t).sum()) / n_pos for t in thresholds]
    fpr = [0.0] + [float((scores[~positives] >= t).sum()) / n_neg for t in thresholds]
    return float(integrate.trapezoid(tpr, fpr))


def evaluate_predictions(probabilities: np.ndarray, labels: Sequence[int], classes: Sequence[str]) -> EvaluationReport:
    """Confusion matrix, accuracy and per-class and macro ROC-AUC from predicted probabilities."""
    probabilities = np.asarray(probabilities, dtype=np.float64)
    labels = np.asarray(labels)
    n_classes = len(classes)
    if probabilities.shape != (labels.shape[0], n_classes):
        raise ShapeMismatchException("evaluation", (labels.shape[0], n_classes), probabilities.shape)

    predicted = probabilities.argmax(axis=1)
    confusion = np.zeros((n_classes, n_classes))
    np.add.at(confusion, (labels, predicted), 1.0)
    totals = confusion.sum(axis=1, keepdims=True)
    confusion = np.divide(confusion, totals, out=np.zeros_like(confusion), where=totals > 0)

    auc = [roc_auc(probabilities[:, k], labels == k) for k in range(n_classes)]
    defined = [value for value in auc if value is not None]
    return EvaluationReport(
        classes=list(classes),
        confusion=confusion.tolist(),
        accuracy=float((predicted == labels).mean()) if labels.size else 0.0,
        auc=auc,
        macro_auc=float(np.mean(defined)) if defined else None,
    )


def evaluate(graph: NetworkGraph, samples: Sequence[LabeledSample], classes: Sequence[str], batch_size: int = 64) -> EvaluationReport:
    if not samples:
        raise InvalidArgumentException("cannot evaluate on an empty test set")
    chunks = [
        predict_batch(graph, [s.image for s in samples[start:start + batch_size]])
        for start in range(0, len(samples), batch_size)
    ]
    return evaluate_predictions(np.concatenate(chunks), [s.label for s in samples], classes)


# =============================================================================
# Grad-CAM
# =============================================================================

def grad_cam(graph: NetworkGraph, image: np.ndarray, target_class: int) -> GradCamResult:
    """
    Class-activation heatmap at input resolution, min-max normalized to [0, 1].

    Feature maps are the activated output of the last convolution; channel
    weights are the spatial mean of the target logit's gradient there.
    """
    n_classes = graph.output_shape[0]
    if not 0 <= target_class < n_classes:
        raise InvalidArgumentException(f"target class {target_class} outside [0, {n_classes})")
    x = _batch([image])
    if x.shape[1:] != tuple(graph.input_shape):
        raise ShapeMismatchException("classifier input", graph.input_shape, x.shape[1:])

    graph.forward(x, training=False)
    feature_index = graph.index_of(Conv2D.kind) + 1
    features = graph.activations[feature_index][0]
    onehot = np.zeros((1, n_classes))
    onehot[0, target_class] = 1.0
    grads = graph.backward(onehot, to_layer=feature_index + 1)[0]
    graph.zero_grad()

    weights = grads.mean(axis=(0, 1))
    cam = np.maximum((features * weights).sum(axis=-1), 0.0)

    height, width = image.shape
    rows = np.linspace(0, cam.shape[0] - 1, height)
    cols = np.linspace(0, cam.shape[1] - 1, width)
    grid = np.meshgrid(rows, cols, indexing="ij")
    upsampled = ndimage.map_coordinates(cam, grid, order=1, mode="nearest")

    result = GradCamResult(heatmap=np.zeros((height, width)), target_class=target_class)
    low, high = float(upsampled.min()), float(upsampled.max())
    if high - low <= 0:
        logger.warning("Grad-CAM map for class %d is constant", target_class)
        result.flags.append("degenerate-gradcam")
        return result
    result.heatmap = (upsampled - low) / (high - low)
    return result


# =============================================================================
# Service
# =============================================================================

class ClassifierService:
    """
    Service layer for classifier training, evaluation and attribution.

    Checkpoints carry the class names and input size as metadata so a
    saved model can be rebuilt without its training config.
    """

    def __init__(self, config: Optional[ClassifierConfig] = None) -> None:
        self.config = config or ClassifierConfig()

    @property
    def input_hw(self) -> tuple[int, int]:
        return self.config.grid.ny, self.config.grid.nx

    def build(self) -> NetworkGraph:
        return build_classifier(self.input_hw, len(self.config.classes), self.config, seed=self.config.seed)

    def datasets(self, threads: Optional[int] = None) -> tuple[list[LabeledSample], list[LabeledSample]]:
        """Train and test sets from independent seeds."""
        train_count, test_count = sample_counts(self.config)
        train_seq, test_seq = np.random.SeedSequence(self.config.seed).spawn(2)
        train = make_labeled_dataset(self.config, train_count, int(train_seq.generate_state(1)[0]), threads)
        test = make_labeled_dataset(self.config, test_count, int(test_seq.generate_state(1)[0]), threads) if test_count else []
        return train, test

    def train(self, samples: Sequence[LabeledSample]) -> tuple[NetworkGraph, TrainingHistory]:
        graph = self.build()
        logger.info("Training classifier with %d parameters on %d samples", graph.parameter_count, len(samples))
        history = train_classifier(graph, samples, self.config)
        return graph, history

    def save(self, path: str | Path, graph: NetworkGraph) -> Path:
        metadata = {"classes": list(self.config.classes), "input_hw": list(self.input_hw), "config": self.config.model_dump(mode="json")}
        return save_checkpoint(path, graph, metadata)

    @classmethod
    def load(cls, path: str | Path) -> tuple["ClassifierService", NetworkGraph]:
        """Rebuild the service config and graph stored in a checkpoint."""
        manifest = read_manifest(path)
        service = cls(ClassifierConfig.model_validate(manifest["metadata"]["config"]))
        graph = service.build()
        load_checkpoint(path, graph)
        return service, graph
