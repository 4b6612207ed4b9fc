from sqlmodel import SQLModel, Field
from sqlalchemy import Column, String, Text, Index, UniqueConstraint
from datetime import datetime
from typing import Optional
from enum import Enum


class FitRunStatus(str, Enum):
    """Enum for fit-run lifecycle values."""
    RUNNING = "running"
    COMPLETED = "completed"
    FAILED = "failed"


class FitRun(SQLModel, table=True):
    """
    One reconstruction fit inside a benchmark scenario.

    (scenario, method, case, seed) identifies a fit; a completed row holds
    the serialized FitReport so interrupted benchmarks can resume.
    """

    __tablename__ = "fit_runs"

    id: Optional[int] = Field(default=None, primary_key=True)

    scenario: str = Field(sa_column=Column(String(40), nullable=False, index=True))
    method: str = Field(sa_column=Column(String(40), nullable=False))
    case: str = Field(sa_column=Column(String(80), nullable=False))
    seed: int = Field(nullable=False)

    status: FitRunStatus = Field(
        default=FitRunStatus.RUNNING,
        sa_column=Column(String(10), nullable=False, index=True),
    )

    # FitReport JSON, set once the fit completes
    report_json: Optional[str] = Field(default=None, sa_column=Column(Text, nullable=True))
    final_fidelity: Optional[float] = Field(default=None)

    created_at: datetime = Field(
        default_factory=lambda: datetime.utcnow(),
        nullable=False,
    )

    updated_at: datetime = Field(
        default_factory=lambda: datetime.utcnow(),
        nullable=False,
        sa_column_kwargs={"onupdate": datetime.utcnow},
    )

    __table_args__ = (
        UniqueConstraint("scenario", "method", "case", "seed", name="uq_fit_runs_key"),
        Index("ix_fit_runs_scenario_status", "scenario", "status"),
    )
