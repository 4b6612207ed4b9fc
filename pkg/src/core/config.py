from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from functools import lru_cache


class Settings(BaseSettings):
    """Engine settings loaded from environment variables or `.env`."""

    APP_ENV: str = "development"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Fit-run registry used by the benchmark harness
    DATABASE_URL: str = "sqlite:///qst_runs.db"
    ARTIFACT_DIR: str = "artifacts"

    # Upper bound on worker threads for dataset and benchmark fan-out
    QST_THREADS: int = Field(default=1, ge=1)

    # Numerical tolerances for state validation
    HERMITIAN_TOL: float = 1e-10
    TRACE_TOL: float = 1e-10
    PSD_TOL: float = 1e-9
    OBSERVABLE_TOL: float = 1e-8
    DEGENERATE_TRACE: float = 1e-30
    PROBABILITY_FLOOR: float = 1e-12
    CHOLESKY_EPSILON: float = 1e-12

    # Hilbert-space padding used when displacing states on a phase-space grid
    WIGNER_PAD_FACTOR: int = Field(default=2, ge=1)
    HUSIMI_PAD_FACTOR: int = Field(default=2, ge=1)

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        extra="ignore",
    )


@lru_cache()
def get_settings() -> Settings:
    """
    Cached settings instance.
    Using lru_cache ensures settings are loaded only once.
    """
    return Settings()
