"""
Dataset recipes and generation.

A recipe item is a (state spec, noise list, label, seed) tuple; every
random choice is drawn from a per-item generator spawned from the dataset
seed, so items can be rendered in any order or thread and remain
reproducible.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

import numpy as np

from src.core.config import get_settings
from src.core.exceptions import InvalidArgumentException, UnknownKindException
from src.core.logging import get_logger
from src.physics.measure import DataVector, PhaseGrid
from src.repositories.artifact_repository import ArtifactRepository, sha256_file
from src.schemas.config_schema import DatasetConfig
from src.schemas.measurement_schema import DataSpec
from src.schemas.noise_schema import MixRandomSpec, NoiseSpec
from src.schemas.report_schema import Manifest, ManifestEntry
from src.schemas.state_schema import (
    BinomialSpec,
    CatSpec,
    CoherentSpec,
    FockSpec,
    GkpSpec,
    NumSpec,
    RandomSpec,
    StateSpec,
    ThermalSpec,
)
from src.services.state_service import apply_data_noise, apply_state_noise, build_grid, build_state, record_data

logger = get_logger(__name__)

T = TypeVar("T")
R = TypeVar("R")

MANIFEST_NAME = "manifest.json"


@dataclass(frozen=True)
class RecipeItem:
    label: str
    state: StateSpec
    noise: list = field(default_factory=list)
    seed: int = 0


def _seed(rng: np.random.Generator) -> int:
    return int(rng.integers(0, 2**31 - 1))


def _complex_amplitude(rng: np.random.Generator, low: float, high: float) -> tuple[float, float]:
    radius = rng.uniform(low, high)
    phase = rng.uniform(0.0, 2.0 * np.pi)
    return float(radius * np.cos(phase)), float(radius * np.sin(phase))


def sample_state_spec(family: str, cutoff: int, rng: np.random.Generator) -> StateSpec:
    """
    Draw a state of one family with parameters uniform over the family's range.

    Raises:
        UnknownKindException: If the family is not known
        InvalidArgumentException: If the cutoff leaves no valid parameters
    """
    mu = int(rng.integers(0, 2))
    if family == "fock":
        return FockSpec(n=int(rng.integers(1, min(16, cutoff - 1) + 1)), cutoff=cutoff)
    if family == "coherent":
        re, im = _complex_amplitude(rng, 1e-6, 3.0)
        return CoherentSpec(alpha_re=re, alpha_im=im, cutoff=cutoff)
    if family == "thermal":
        return ThermalSpec(n_th=float(rng.uniform(0.0, 16.0)), cutoff=cutoff)
    if family == "num":
        return NumSpec(mu=mu, cutoff=cutoff)
    if family == "binomial":
        spacings = [s for s in range(1, 11) if cutoff // (s + 1) - 1 >= 2]
        if not spacings:
            raise InvalidArgumentException(f"cutoff {cutoff} is too small for any binomial code")
        S = int(rng.choice(spacings))
        N = int(rng.integers(2, cutoff // (S + 1)))
        return BinomialSpec(S=S, N=N, mu=mu, cutoff=cutoff)
    if family == "cat":
        re, im = _complex_amplitude(rng, 1.0, 3.0)
        return CatSpec(alpha_re=re, alpha_im=im, S=int(rng.integers(0, 3)), mu=mu, cutoff=cutoff)
    if family == "gkp":
        return GkpSpec(Delta=float(rng.uniform(0.2, 0.5)), mu=mu, cutoff=cutoff)
    if family == "random":
        return RandomSpec(density=float(rng.uniform(0.1, 1.0)), seed=_seed(rng), cutoff=cutoff)
    raise UnknownKindException("state family", family)


def plan_recipe(
    classes: Sequence[str],
    per_class: int,
    cutoff: int,
    seed: int,
    mix_sigma_max: float = 0.5,
    mix_density: float = 0.8,
    extra_noise: Sequence[NoiseSpec] = (),
) -> list[RecipeItem]:
    """
    Equal-count recipe: per class, ``per_class`` random states mixed with a
    random state at ``sigma ~ U[0, mix_sigma_max]``, followed by ``extra_noise``.
    """
    children = np.random.SeedSequence(seed).spawn(len(classes) * per_class)
    items = []
    for index, child in enumerate(children):
        label = classes[index // per_class]
        rng = np.random.default_rng(child)
        state = sample_state_spec(label, cutoff, rng)
        noise: list = []
        if mix_sigma_max > 0:
            noise.append(MixRandomSpec(sigma=float(rng.uniform(0.0, mix_sigma_max)), density=mix_density, seed=_seed(rng)))
        noise.extend(_reseeded(extra_noise, rng))
        items.append(RecipeItem(label=label, state=state, noise=noise, seed=int(child.generate_state(1)[0] % (2**31))))
    return items


def _reseeded(specs: Sequence[NoiseSpec], rng: np.random.Generator) -> list:
    """Give every seeded channel a fresh per-item seed so samples do not share noise."""
    out = []
    for spec in specs:
        if getattr(spec, "seed", None) is not None:
            spec = spec.model_copy(update={"seed": _seed(rng)})
        out.append(spec)
    return out


def render_item(item: RecipeItem, data_spec: DataSpec, grid: Optional[PhaseGrid] = None) -> DataVector:
    """State, state-level noise, quasi-probability data, data-level noise."""
    rho = apply_state_noise(build_state(item.state), item.noise)
    data = record_data(rho, data_spec, grid=grid)
    return apply_data_noise(data, item.noise)


def parallel_map(fn: Callable[[T], R], items: Sequence[T], threads: Optional[int] = None) -> list[R]:
    """Order-stable map over a thread pool capped by ``QST_THREADS``."""
    threads = threads or get_settings().QST_THREADS
    if threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


def render_all(items: Sequence[RecipeItem], data_spec: DataSpec, threads: Optional[int] = None) -> list[DataVector]:
    grid = build_grid(data_spec.grid)
    return parallel_map(lambda item: render_item(item, data_spec, grid), items, threads)


class DatasetService:
    """
    Service layer for dataset generation.

    Writes one CSV per sample plus a manifest with SHA-256 digests; the
    same config and seed reproduce byte-identical files.
    """

    def __init__(self, artifacts: ArtifactRepository) -> None:
        self.artifacts = artifacts

    def plan(self, config: DatasetConfig) -> list[RecipeItem]:
        if config.states:
            return [
                RecipeItem(label=spec.family, state=spec, noise=list(config.noise), seed=config.seed + index)
                for index, spec in enumerate(config.states)
            ]
        return plan_recipe(
            config.classes,
            config.per_class,
            config.cutoff,
            config.seed,
            mix_sigma_max=config.mix_sigma_max,
            mix_density=config.mix_density,
            extra_noise=config.noise,
        )

    def generate_dataset(self, config: DatasetConfig, out_dir: str | Path = "dataset", threads: Optional[int] = None) -> Manifest:
        """
        Render every recipe item and write it with its manifest.

        Returns:
            Manifest whose entries point at the written CSV files
        """
        items = self.plan(config)
        logger.info("Generating %d samples into %s", len(items), out_dir)
        data = render_all(items, config.data, threads)

        out_dir = Path(out_dir)
        entries = []
        for index, (item, values) in enumerate(zip(items, data)):
            relative = Path(f"{index:06d}_{item.label}.csv")
            path = self.artifacts.write_data(out_dir / relative, values)
            entries.append(
                ManifestEntry(
                    state=item.state,
                    noise=item.noise,
                    grid=config.data.grid,
                    label=item.label,
                    seed=item.seed,
                    path=relative.as_posix(),
                    sha256=sha256_file(path),
                )
            )
        manifest = Manifest(data=config.data, seed=config.seed, entries=entries)
        self.artifacts.write_json(out_dir / MANIFEST_NAME, manifest)
        logger.info("Dataset class counts: %s", manifest.class_counts())
        return manifest

    def load_manifest(self, path: str | Path) -> Manifest:
        return Manifest.model_validate(self.artifacts.read_json(path))

    def load_samples(self, manifest_path: str | Path) -> tuple[Manifest, list[DataVector]]:
        """Manifest plus the data vectors it references, on the manifest's grid."""
        manifest_path = self.artifacts.resolve(manifest_path)
        manifest = self.load_manifest(manifest_path)
        grid = build_grid(manifest.data.grid)
        vectors = [self.artifacts.read_data(manifest_path.parent / entry.path, grid=grid) for entry in manifest.entries]
        return manifest, vectors
