"""
Benchmark harness: repeated reconstructions over seeds, summarized as
mean and one-standard-deviation fidelity bands.

Scenarios:
  loss-compare    binomial code, iMLE vs generator losses vs QST-CGAN
  additive-noise  binomial code with additive Gaussian noise, every loss
  conv-noise      fock(1) and binomial code convolved with a thermal kernel
  mixed-rank      cat/Fock mixtures of rank 1-4 and a thermal state
  data-reduction  rank 2-4 cat/Fock mixtures from scatter grids of decreasing size
"""
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from src.core.database import get_session, init_db
from src.core.exceptions import UnknownKindException
from src.core.logging import get_logger
from src.physics import measure, noise, states
from src.physics.fock import DensityMatrix
from src.physics.measure import PhaseGrid
from src.repositories.artifact_repository import ArtifactRepository
from src.repositories.fit_run_repository import FitRunRepository
from src.schemas.config_schema import (
    BenchmarkConfig,
    CganConfig,
    CholeskyFitConfig,
    FitControl,
    ImleConfig,
    KnownNoise,
    LossKind,
)
from src.schemas.report_schema import BenchmarkSummary, FitReport, MethodSummary
from src.services.dataset_service import parallel_map
from src.services.reconstruction_service import ReconstructionProblem, ReconstructionService

logger = get_logger(__name__)

SCENARIOS = ("loss-compare", "additive-noise", "conv-noise", "mixed-rank", "data-reduction")
LOSS_METHODS = ("imle", "L1", "L2", "CE", "KL", "cgan")
NOISY_METHODS = ("imle", "cgan")
REDUCTION_RANKS = (2, 3, 4)

ProblemFactory = Callable[[int], ReconstructionProblem]


@dataclass(frozen=True)
class BenchmarkCase:
    """One data-generating setup; ``make_problem(seed)`` builds its fit problem."""

    name: str
    methods: tuple[str, ...]
    make_problem: ProblemFactory
    reference: DensityMatrix


@dataclass(frozen=True)
class BenchmarkJob:
    case: BenchmarkCase
    method: str
    seed: int


def _husimi_problem(
    rho: DensityMatrix,
    grid: PhaseGrid,
    cutoff: int,
    corrupt: Optional[Callable[[measure.DataVector, int], measure.DataVector]] = None,
    known_noise: Optional[KnownNoise] = None,
) -> ProblemFactory:
    ops = measure.husimi_operators(grid, cutoff)
    clean = measure.normalize_unit_max(measure.husimi(rho, grid))

    def make(seed: int) -> ReconstructionProblem:
        data = corrupt(clean, seed) if corrupt is not None else clean
        return ReconstructionProblem(data=data, ops=ops, known_noise=known_noise, true_state=rho)

    return make


def _square_grid(config: BenchmarkConfig) -> PhaseGrid:
    return measure.make_square_grid(nx=config.grid_points, ny=config.grid_points)


def _binomial(cutoff: int) -> DensityMatrix:
    return states.make_binomial(2, 4, 0, cutoff)


def build_cases(config: BenchmarkConfig) -> list[BenchmarkCase]:
    """
    Cases of a scenario.

    Raises:
        UnknownKindException: If the scenario is not known
    """
    cutoff = config.cutoff
    scenario = config.scenario
    if scenario == "loss-compare":
        rho = _binomial(cutoff)
        return [BenchmarkCase("binomial-S2-N4", LOSS_METHODS, _husimi_problem(rho, _square_grid(config), cutoff), rho)]

    if scenario == "additive-noise":
        rho = _binomial(cutoff)
        sigma = config.sigma_G
        known = KnownNoise(kind="additive_gaussian", sigma_G=sigma)
        return [
            BenchmarkCase(
                f"sigma_G={sigma:g}",
                LOSS_METHODS,
                _husimi_problem(rho, _square_grid(config), cutoff, lambda d, seed: noise.additive_gaussian(d, sigma, seed), known),
                rho,
            )
        ]

    if scenario == "conv-noise":
        n_th = config.n_th
        known = KnownNoise(kind="gaussian_conv", n_th=n_th)

        def convolve(data: measure.DataVector, seed: int) -> measure.DataVector:
            return measure.normalize_unit_max(noise.gaussian_convolve(data, n_th))

        cases = []
        for name, rho in (("fock-1", states.make_fock(1, cutoff)), ("binomial-S2-N4", _binomial(cutoff))):
            problem = _husimi_problem(rho, _square_grid(config), cutoff, convolve, known)
            cases.append(BenchmarkCase(f"{name},n_th={n_th:g}", NOISY_METHODS, problem, rho))
        return cases

    if scenario == "mixed-rank":
        cases = []
        for rank in (1, 2, 3, 4):
            rho = states.make_cat_fock_mixture(rank, cutoff)
            cases.append(BenchmarkCase(f"rank={rank}", NOISY_METHODS, _husimi_problem(rho, _square_grid(config), cutoff), rho))
        thermal = states.make_thermal(1.0, cutoff)
        cases.append(BenchmarkCase("thermal", NOISY_METHODS, _husimi_problem(thermal, _square_grid(config), cutoff), thermal))
        return cases

    if scenario == "data-reduction":
        cases = []
        for rank in REDUCTION_RANKS:
            rho = states.make_cat_fock_mixture(rank, cutoff)
            for count in config.point_counts:
                grid = measure.sample_scatter(count, seed=count)
                cases.append(BenchmarkCase(f"rank={rank},points={count}", NOISY_METHODS, _husimi_problem(rho, grid, cutoff), rho))
        return cases

    raise UnknownKindException("benchmark scenario", scenario)


def _control(config: BenchmarkConfig) -> FitControl:
    return FitControl(max_iters=config.max_iters, min_iters=min(500, config.max_iters))


def run_method(method: str, problem: ReconstructionProblem, config: BenchmarkConfig, seed: int) -> FitReport:
    service = ReconstructionService()
    control = _control(config)
    if method == "imle":
        return service.imle(problem, ImleConfig(control=control))
    if method == "cgan":
        return service.qst_cgan_fit(problem, CganConfig(lambda_l1=config.lambda_l1, control=control, seed=seed))
    return service.cholesky_fit(
        problem,
        CholeskyFitConfig(loss=LossKind(method), parameterization="generator", control=control, seed=seed),
    )


def _padded(traces: list[list[float]]) -> np.ndarray:
    """Traces stacked to a common length, early-stopped ones held at their last value."""
    length = max(len(trace) for trace in traces)
    return np.asarray([trace + [trace[-1]] * (length - len(trace)) for trace in traces])


def summarize(method: str, case: str, reports: list[FitReport]) -> MethodSummary:
    finals = np.asarray([report.final_fidelity for report in reports], dtype=np.float64)
    traces = _padded([report.fidelity_trace or [report.final_fidelity] for report in reports])
    return MethodSummary(
        method=method,
        case=case,
        runs=len(reports),
        final_mean=float(finals.mean()),
        final_std=float(finals.std()),
        mean_trace=traces.mean(axis=0).tolist(),
        std_trace=traces.std(axis=0).tolist(),
    )


class BenchmarkService:
    """
    Service layer for benchmark scenarios.

    Every (scenario, method, case, seed) fit is registered in the fit-run
    registry; completed fits are reused on rerun.
    """

    def __init__(self, artifacts: ArtifactRepository, database_url: Optional[str] = None) -> None:
        self.artifacts = artifacts
        self.database_url = database_url
        init_db(database_url)

    def _run_job(self, scenario: str, job: BenchmarkJob, config: BenchmarkConfig) -> FitReport:
        key = (scenario, job.method, job.case.name, job.seed)
        with get_session(self.database_url) as session:
            stored = FitRunRepository(session).get_completed_report(*key)
        if stored is not None:
            logger.info("Reusing completed fit %s", key)
            return stored

        with get_session(self.database_url) as session:
            run_id = FitRunRepository(session).create(*key).id
        try:
            report = run_method(job.method, job.case.make_problem(job.seed), config, job.seed)
        except Exception:
            with get_session(self.database_url) as session:
                FitRunRepository(session).fail(run_id)
            raise
        with get_session(self.database_url) as session:
            FitRunRepository(session).complete(run_id, report)
        logger.info("Fit %s finished: fidelity=%.6f", key, report.final_fidelity)
        return report

    def run_benchmark(self, config: BenchmarkConfig, out_dir: Union[str, Path] = "benchmark", threads: Optional[int] = None) -> BenchmarkSummary:
        """
        Run every case x method x seed of a scenario and write its artifacts.

        Writes ``traces/<case>/<method>_seed<k>.csv``, ``summary.json``,
        ``bands/<case>/<method>.csv`` and PGM rasters of each case's data
        and of the first seed's reconstructions.
        """
        out_dir = Path(out_dir)
        cases = build_cases(config)
        jobs = [BenchmarkJob(case, method, seed) for case in cases for method in case.methods for seed in config.seeds]
        logger.info("Benchmark %s: %d fits", config.scenario, len(jobs))
        reports = parallel_map(lambda job: self._run_job(config.scenario, job, config), jobs, threads)

        summary = BenchmarkSummary(scenario=config.scenario, seeds=list(config.seeds))
        by_key: dict[tuple[str, str], list[FitReport]] = {}
        for job, report in zip(jobs, reports):
            by_key.setdefault((job.case.name, job.method), []).append(report)
            self.artifacts.write_table(
                out_dir / "traces" / job.case.name / f"{job.method}_seed{job.seed}.csv",
                ("iteration", "fidelity"),
                ((i + 1, value) for i, value in enumerate(report.fidelity_trace)),
            )

        for case in cases:
            problem = case.make_problem(config.seeds[0])
            if problem.data.grid is not None and problem.data.grid.shape is not None:
                self.artifacts.write_pgm(out_dir / "rasters" / case.name / "data.pgm", problem.data.as_image(), {"case": case.name})
            self._write_reference(out_dir / "rasters" / case.name, case.reference)
            for method in case.methods:
                group = by_key[(case.name, method)]
                method_summary = summarize(method, case.name, group)
                summary.methods.append(method_summary)
                self.artifacts.write_table(
                    out_dir / "bands" / case.name / f"{method}.csv",
                    ("iteration", "mean", "std"),
                    ((i + 1, m, s) for i, (m, s) in enumerate(zip(method_summary.mean_trace, method_summary.std_trace))),
                )
                self._write_reference(out_dir / "rasters" / case.name, group[0].final_state.to_array(), method)

        self.artifacts.write_json(out_dir / "summary.json", summary)
        return summary

    def _write_reference(self, directory: Path, rho: DensityMatrix, method: Optional[str] = None) -> None:
        """|rho| and the Husimi function of a state as rasters."""
        stem = method or "true"
        grid = measure.make_square_grid()
        self.artifacts.write_pgm(directory / f"{stem}_abs_rho.pgm", np.abs(rho), {"method": stem})
        q = measure.husimi(rho, grid)
        self.artifacts.write_pgm(directory / f"{stem}_husimi.pgm", q.as_image(), {"method": stem})
