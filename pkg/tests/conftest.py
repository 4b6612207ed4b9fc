import numpy as np
import pytest

from src.core.config import get_settings
from src.repositories.artifact_repository import ArtifactRepository


@pytest.fixture(autouse=True)
def fresh_settings():
    """Each test reads settings from a clean cache."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def artifacts(tmp_path) -> ArtifactRepository:
    return ArtifactRepository(tmp_path)


@pytest.fixture
def database_url(tmp_path) -> str:
    return f"sqlite:///{tmp_path / 'runs.db'}"
