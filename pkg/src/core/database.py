from contextlib import contextmanager
from typing import Iterator, Optional

from sqlalchemy.engine import Engine
from sqlmodel import Session, SQLModel, create_engine

from src.core.config import get_settings
from src.models.fit_run_model import FitRun  # noqa: F401 - Import needed for SQLModel metadata

_engines: dict[str, Engine] = {}


def get_engine(database_url: Optional[str] = None) -> Engine:
    """
    Return a cached engine for the fit-run registry.

    Args:
        database_url: Optional override of `Settings.DATABASE_URL`
    """
    settings = get_settings()
    url = database_url or settings.DATABASE_URL
    if url not in _engines:
        connect_args = {"check_same_thread": False} if url.startswith("sqlite") else {}
        _engines[url] = create_engine(
            url,
            echo=settings.DEBUG,  # Log SQL statements in debug mode
            connect_args=connect_args,
        )
    return _engines[url]


def init_db(database_url: Optional[str] = None) -> None:
    """
    Initialize registry tables.
    Call this before the first benchmark run.
    """
    SQLModel.metadata.create_all(get_engine(database_url))


@contextmanager
def get_session(database_url: Optional[str] = None) -> Iterator[Session]:
    """
    Provide a session bound to the registry engine.
    Commits on success and rolls back on any exception.
    """
    session = Session(get_engine(database_url), expire_on_commit=False)
    try:
        yield session
        session.commit()
    except Exception:
        session.rollback()
        raise
    finally:
        session.close()
