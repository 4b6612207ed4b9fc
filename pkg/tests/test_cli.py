import json

import numpy as np
import pytest

from main import run
from src.commands.reconstruct import parse_method
from src.core.exceptions import ConfigException
from src.physics.fock import validate_density_matrix
from src.physics.measure import DataVector, make_square_grid
from src.physics.states import make_binomial, make_cat_fock_mixture, make_fock, mean_photon
from src.repositories.artifact_repository import ArtifactRepository
from src.schemas.config_schema import BenchmarkConfig, LossKind, ReconstructionMethod
from src.schemas.state_schema import DensityMatrixPayload
from src.services import benchmark_service
from src.services.benchmark_service import LOSS_METHODS, BenchmarkService, build_cases


def write_state(tmp_path, **spec) -> str:
    path = tmp_path / "state.json"
    path.write_text(json.dumps(spec))
    return str(path)


# =============================================================================
# Exit codes
# =============================================================================

def test_measure_writes_unit_max_data(tmp_path, capsys):
    state = write_state(tmp_path, family="coherent", alpha_re=1.0)
    out = tmp_path / "q.csv"
    code = run(["--cutoff", "8", "measure", "--state", state, "--nx", "8", "--ny", "8", "--out", str(out), "--pgm", str(tmp_path / "q.pgm")])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["points"] == 64
    data = ArtifactRepository().read_data(out, grid=make_square_grid((-5, 5), 8, 8))
    assert data.values.max() == pytest.approx(1.0)
    assert (tmp_path / "q.pgm.json").exists()


def test_missing_config_file_exits_with_config_error(tmp_path):
    state = write_state(tmp_path, family="fock", n=1)
    code = run(["--config", str(tmp_path / "absent.json"), "measure", "--state", state, "--out", str(tmp_path / "q.csv")])
    assert code == 2


def test_unknown_config_key_exits_with_config_error(tmp_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"cutoff": 8, "reconstruction": {"methd": "imle"}}))
    state = write_state(tmp_path, family="fock", n=1)
    code = run(["--config", str(config), "measure", "--state", state, "--out", str(tmp_path / "q.csv")])
    assert code == 2


def test_all_zero_data_is_a_numerical_failure(tmp_path):
    grid = make_square_grid((-1, 1), 3, 3)
    ArtifactRepository().write_data(tmp_path / "zeros.csv", DataVector(values=np.zeros(9), grid=grid))
    code = run(["--cutoff", "4", "reconstruct", "--data", str(tmp_path / "zeros.csv"), "--method", "imle", "--out", str(tmp_path / "rho.json")])
    assert code == 3


def test_reconstruct_requires_cutoff(tmp_path):
    grid = make_square_grid((-1, 1), 3, 3)
    ArtifactRepository().write_data(tmp_path / "d.csv", DataVector(values=np.ones(9), grid=grid))
    assert run(["reconstruct", "--data", str(tmp_path / "d.csv"), "--out", str(tmp_path / "rho.json")]) == 2


def measured_problem(tmp_path) -> tuple[str, str]:
    state = write_state(tmp_path, family="fock", n=1)
    data = tmp_path / "d.csv"
    assert run(["--cutoff", "4", "measure", "--state", state, "--nx", "6", "--ny", "6", "--out", str(data)]) == 0
    ops = tmp_path / "ops.json"
    ops.write_text(json.dumps({"kind": "husimi_projector", "grid": {"nx": 6, "ny": 6}, "cutoff": 4}))
    return str(data), str(ops)


def test_global_flags_after_the_command(tmp_path, capsys):
    data, ops = measured_problem(tmp_path)

    def reconstruct(name: str, leading: list[str], trailing: list[str]) -> dict:
        out, report = tmp_path / f"{name}.json", tmp_path / f"{name}_report.json"
        code = run([
            *leading, "reconstruct", "--method", "cgan", "--data", data, "--ops", ops, "--lambda-l1", "1",
            *trailing, "--out", str(out), "--report", str(report), "--max-iters", "3",
        ])
        assert code == 0
        return json.loads(report.read_text())

    after = reconstruct("after", [], ["--seed", "7"])
    before = reconstruct("before", ["--seed", "7"], [])
    unseeded = reconstruct("unseeded", [], [])
    capsys.readouterr()
    assert after["method"] == "cgan"
    assert after["iterations"] == 3
    assert after == before
    assert after["loss_traces"] != unseeded["loss_traces"]


def test_cutoff_flag_overrides_the_ops_file(tmp_path, capsys):
    data, ops = measured_problem(tmp_path)
    out = tmp_path / "rho.json"
    args = ["reconstruct", "--method", "imle", "--data", data, "--ops", ops, "--max-iters", "2", "--out", str(out)]
    assert run(args) == 0
    assert DensityMatrixPayload.model_validate_json(out.read_text()).to_array().shape == (4, 4)
    assert run([*args, "--cutoff", "6"]) == 0
    assert DensityMatrixPayload.model_validate_json(out.read_text()).to_array().shape == (6, 6)
    capsys.readouterr()




def test_measure_then_reconstruct(tmp_path, capsys):
    state = write_state(tmp_path, family="fock", n=1)
    data = tmp_path / "q.csv"
    assert run(["--cutoff", "4", "measure", "--state", state, "--nx", "6", "--ny", "6", "--out", str(data)]) == 0
    capsys.readouterr()

    out, report = tmp_path / "rho.json", tmp_path / "report.json"
    code = run([
        "--cutoff", "4", "reconstruct", "--data", str(data), "--nx", "6", "--method", "imle",
        "--true-state", state, "--max-iters", "20", "--out", str(out), "--report", str(report),
    ])
    assert code == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary["method"] == "imle"
    assert summary["iterations"] == 20
    rho = DensityMatrixPayload.model_validate_json(out.read_text()).to_array()
    validate_density_matrix(rho)
    assert len(json.loads(report.read_text())["fidelity_trace"]) == 20


def test_noise_on_state_and_data(tmp_path, capsys):
    state = write_state(tmp_path, family="coherent", alpha_re=1.0, cutoff=16)
    loss = tmp_path / "loss.json"
    loss.write_text(json.dumps([{"kind": "photon_loss", "fraction": 0.35}]))
    assert run(["noise", "--input", state, "--noise", str(loss), "--out", str(tmp_path / "lossy.json")]) == 0
    lossy = DensityMatrixPayload.model_validate_json((tmp_path / "lossy.json").read_text()).to_array()
    assert mean_photon(lossy) == pytest.approx(0.65, abs=1e-6)

    data = tmp_path / "q.csv"
    assert run(["measure", "--state", state, "--nx", "8", "--ny", "8", "--out", str(data)]) == 0
    additive = tmp_path / "additive.json"
    additive.write_text(json.dumps([{"kind": "additive_gaussian", "sigma_G": 0.05, "seed": 3}]))
    assert run(["noise", "--input", str(data), "--noise", str(additive), "--out", str(tmp_path / "noisy.csv")]) == 0
    capsys.readouterr()

    # channels applied to the wrong kind of input
    assert run(["noise", "--input", str(data), "--noise", str(loss), "--out", str(tmp_path / "x.csv")]) == 2
    assert run(["noise", "--input", state, "--noise", str(additive), "--out", str(tmp_path / "x.json")]) == 2


def test_classifier_workflow(tmp_path, capsys):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({
        "dataset": {"classes": ["fock", "coherent"], "per_class": 1, "cutoff": 8, "data": {"grid": {"nx": 16, "ny": 16}}},
        "classifier": {
            "classes": ["fock", "coherent"], "cutoff": 8, "grid": {"nx": 16, "ny": 16},
            "epochs": 1, "batch_size": 2, "train_per_class": 1, "test_per_class": 1,
        },
    }))
    dataset, model = tmp_path / "ds", tmp_path / "model.ckpt"
    assert run(["--config", str(config), "generate", "--out", str(dataset)]) == 0
    assert run(["classify", "train", "--config", str(config), "--out", str(model), "--metrics", str(tmp_path / "m.json")]) == 0
    assert len(json.loads((tmp_path / "m.json").read_text())["history"]["loss"]) == 1
    capsys.readouterr()

    assert run(["classify", "eval", "--model", str(model), "--data", str(dataset / "manifest.json"), "--confusion", str(tmp_path / "cm.csv")]) == 0
    assert json.loads(capsys.readouterr().out)["classes"] == ["fock", "coherent"]
    sample = str(dataset / "000000_fock.csv")
    assert run(["classify", "predict", "--model", str(model), "--input", sample]) == 0
    assert json.loads(capsys.readouterr().out)["label"] in ("fock", "coherent")
    assert run(["classify", "gradcam", "--model", str(model), "--input", sample, "--class", "fock", "--out", str(tmp_path / "cam.pgm")]) == 0
    assert (tmp_path / "cam.pgm").exists()
    assert run(["classify", "gradcam", "--model", str(model), "--input", sample, "--class", "gkp", "--out", str(tmp_path / "x.pgm")]) == 2


def test_parse_method():
    assert parse_method("imle") == (ReconstructionMethod.IMLE, None)
    assert parse_method("cholesky:CE") == (ReconstructionMethod.CHOLESKY, LossKind.CE)
    with pytest.raises(ConfigException):
        parse_method("bayesian")
    with pytest.raises(ConfigException):
        parse_method("cholesky:huber")


# =============================================================================
# Benchmarks
# =============================================================================

def tiny_benchmark() -> BenchmarkConfig:
    return BenchmarkConfig(scenario="loss-compare", seeds=[0], cutoff=16, grid_points=4, max_iters=2)


def test_benchmark_summary_and_artifacts(artifacts, database_url):
    summary = BenchmarkService(artifacts, database_url).run_benchmark(tiny_benchmark(), "bench")
    assert [m.method for m in summary.methods] == list(LOSS_METHODS)
    for method in summary.methods:
        assert method.runs == 1
        assert method.final_std == 0.0
        assert len(method.mean_trace) == 2
    case = summary.methods[0].case
    root = artifacts.resolve("bench")
    assert (root / "summary.json").exists()
    assert (root / "traces" / case / "cgan_seed0.csv").exists()
    assert (root / "bands" / case / "imle.csv").exists()
    assert (root / "rasters" / case / "data.pgm").exists()


def test_benchmark_resumes_from_registry(artifacts, database_url, monkeypatch):
    first = BenchmarkService(artifacts, database_url).run_benchmark(tiny_benchmark(), "bench")

    def refuse(*args, **kwargs):
        raise AssertionError("completed fits must not rerun")

    monkeypatch.setattr(benchmark_service, "run_method", refuse)
    second = BenchmarkService(artifacts, database_url).run_benchmark(tiny_benchmark(), "bench-again")
    assert second == first


def test_unknown_scenario_rejected():
    with pytest.raises(ValueError):
        BenchmarkConfig(scenario="squeezing")


def test_additive_noise_compares_every_loss_on_the_binomial_code():
    [case] = build_cases(BenchmarkConfig(scenario="additive-noise", grid_points=4))
    assert case.methods == LOSS_METHODS
    np.testing.assert_allclose(case.reference, make_binomial(2, 4, 0, 16))
    # each seed draws its own noise
    assert not np.array_equal(case.make_problem(0).data.values, case.make_problem(1).data.values)


def test_conv_noise_cases():
    cases = build_cases(BenchmarkConfig(scenario="conv-noise", grid_points=4))
    assert [c.name for c in cases] == ["fock-1,n_th=5", "binomial-S2-N4,n_th=5"]
    np.testing.assert_allclose(cases[0].reference, make_fock(1, 16))
    np.testing.assert_allclose(cases[1].reference, make_binomial(2, 4, 0, 16))
    assert all(c.make_problem(0).known_noise.n_th == 5.0 for c in cases)


def test_data_reduction_sweeps_mixtures_over_point_counts():
    cases = build_cases(BenchmarkConfig(scenario="data-reduction", point_counts=[32, 128]))
    assert [c.name for c in cases] == [
        "rank=2,points=32", "rank=2,points=128",
        "rank=3,points=32", "rank=3,points=128",
        "rank=4,points=32", "rank=4,points=128",
    ]
    for case, rank in zip(cases[::2], (2, 3, 4)):
        np.testing.assert_allclose(case.reference, make_cat_fock_mixture(rank, 16))
        assert np.linalg.matrix_rank(case.reference, tol=1e-8) == rank
    assert len(cases[1].make_problem(0).data) == 128
