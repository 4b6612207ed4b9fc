from datetime import datetime
from typing import List, Optional

from sqlalchemy.exc import IntegrityError
from sqlmodel import Session, select

from src.core.exceptions import NotFoundException
from src.models.fit_run_model import FitRun, FitRunStatus
from src.schemas.report_schema import FitReport


class FitRunRepository:
    """
    Repository for FitRun registry operations.

    A benchmark consults the registry before each fit and skips fits whose
    row is already completed, so an interrupted benchmark can resume.
    """

    def __init__(self, session: Session) -> None:
        self.session = session

    def get(self, scenario: str, method: str, case: str, seed: int) -> Optional[FitRun]:
        """
        Get a fit run by its key.

        Returns:
            FitRun if found, None otherwise
        """
        query = select(FitRun).where(
            FitRun.scenario == scenario,
            FitRun.method == method,
            FitRun.case == case,
            FitRun.seed == seed,
        )
        return self.session.exec(query).first()

    def get_completed_report(self, scenario: str, method: str, case: str, seed: int) -> Optional[FitReport]:
        """The stored report of a completed fit, or None if the fit still has to run."""
        run = self.get(scenario, method, case, seed)
        if run is None or run.status != FitRunStatus.COMPLETED or run.report_json is None:
            return None
        return FitReport.model_validate_json(run.report_json)

    def create(self, scenario: str, method: str, case: str, seed: int) -> FitRun:
        """
        Register a fit as running, resetting a stale row with the same key.
        """
        run = self.get(scenario, method, case, seed)
        if run is not None:
            run.status = FitRunStatus.RUNNING
            run.report_json = None
            run.final_fidelity = None
            run.updated_at = datetime.utcnow()
        else:
            run = FitRun(scenario=scenario, method=method, case=case, seed=seed)
        self.session.add(run)
        try:
            self.session.flush()
        except IntegrityError:
            self.session.rollback()
            raise
        self.session.refresh(run)
        return run

    def complete(self, run_id: int, report: FitReport) -> FitRun:
        """
        Store the report of a finished fit.

        Raises:
            NotFoundException: If no run has this id
        """
        run = self.session.get(FitRun, run_id)
        if run is None:
            raise NotFoundException("fit run", run_id)
        run.status = FitRunStatus.COMPLETED
        run.report_json = report.model_dump_json()
        run.final_fidelity = report.final_fidelity
        run.updated_at = datetime.utcnow()
        self.session.add(run)
        self.session.flush()
        return run

    def fail(self, run_id: int) -> None:
        run = self.session.get(FitRun, run_id)
        if run is None:
            raise NotFoundException("fit run", run_id)
        run.status = FitRunStatus.FAILED
        run.updated_at = datetime.utcnow()
        self.session.add(run)
        self.session.flush()

    def list_scenario(self, scenario: str) -> List[FitRun]:
        query = select(FitRun).where(FitRun.scenario == scenario).order_by(FitRun.id)
        return list(self.session.exec(query).all())
