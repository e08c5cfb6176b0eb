import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gcsm.errors import DatasetIntegrityError, InvalidArgumentError
from gcsm.experiments import (
    ALL_KERNELS, BenchmarkConfig, CellResult, ExperimentResult, SyntheticConfig, bundled_path, gen_synthetic,
    load_dataset, mae, run_benchmark, run_suite, synthetic_stand_in, write_results,
)
from gcsm.hyperopt import BoConfig, FitConfig
from gcsm.kernels import gcsm_cross_terms_at_zero, kernel_from_dict

TINY = BenchmarkConfig(
    fit=FitConfig(max_iters=5),
    bo=BoConfig(n_init=4, budget=5, n_candidates=64, n_local=8, inner_steps=2),
    q_synthetic=2, q_real=2, sm_restarts=2,
)
SMALL_SYNTHETIC = SyntheticConfig(n=60)


def test_mae_examples():
    assert mae([1, 2], [1, 3]) == 0.5
    y = np.arange(5.0)
    assert mae(y, y) == 0.0


@given(st.integers(0, 10_000))
def test_mae_independent_of_summation_order(seed):
    r = np.random.default_rng(seed)
    y, yhat = r.normal(size=50), r.normal(size=50)
    ref = math.fsum(abs(a - b) for a, b in reversed(list(zip(y, yhat)))) / 50
    assert mae(y, yhat) == pytest.approx(ref, abs=1e-12)


def test_mae_rejects_mismatch():
    with pytest.raises(InvalidArgumentError):
        mae([1.0], [1.0, 2.0])


# ---------------------------------------------------------------------------
# synthetic tasks


def test_synthetic_deterministic():
    a, b = gen_synthetic(3), gen_synthetic(3)
    for name in a:
        assert a[name].train.y.tobytes() == b[name].train.y.tobytes()
        assert a[name].test.x.tobytes() == b[name].test.x.tobytes()
    assert gen_synthetic(4)["arti1-normal"].train.y.tobytes() != a["arti1-normal"].train.y.tobytes()


def test_synthetic_splits():
    tasks = gen_synthetic(0)
    assert set(tasks) == {"arti1-normal", "arti2-integral", "arti3-derivative", "arti4-delayed"}
    for task in tasks.values():
        xs = np.concatenate([task.train.x[:, 0], task.test.x[:, 0]])
        assert len(xs) == 500 and len(set(xs)) == 500
    assert (len(tasks["arti4-delayed"].train), len(tasks["arti4-delayed"].test)) == (250, 250)
    assert (len(tasks["arti1-normal"].train), len(tasks["arti1-normal"].test)) == (250, 250)
    assert tasks["arti2-integral"].train.x.max() <= 0 < tasks["arti2-integral"].test.x.min()
    assert tasks["arti3-derivative"].test.x.max() < 0 <= tasks["arti3-derivative"].train.x.min()


def _full_series(task):
    x = np.concatenate([task.train.x[:, 0], task.test.x[:, 0]])
    y = np.concatenate([task.train.y, task.test.y])
    order = np.argsort(x)
    return x[order], y[order]


def test_integral_and_derivative_are_inverse():
    tasks = gen_synthetic(2)
    x, f = _full_series(tasks["arti1-normal"])
    _, integral = _full_series(tasks["arti2-integral"])
    h = x[1] - x[0]
    recovered = np.gradient(integral, x)
    second = np.abs(np.diff(f, 2)).max() / h**2
    # central difference of the trapezoid integral is f + h^2 f''/4 in the interior
    assert np.abs(recovered - f)[1:-1].max() <= 0.3 * h**2 * second + 1e-12


def test_derivative_task_matches_finite_differences():
    tasks = gen_synthetic(1)
    x, f = _full_series(tasks["arti1-normal"])
    _, d = _full_series(tasks["arti3-derivative"])
    np.testing.assert_allclose(d[1:-1], (f[2:] - f[:-2]) / (x[2:] - x[:-2]), rtol=1e-12, atol=1e-12)


# ---------------------------------------------------------------------------
# datasets


def test_airline_bundle():
    task = load_dataset(None, "airline")
    assert (len(task.train), len(task.test)) == (96, 48)
    assert task.train.x[0, 0] == 1 and task.test.x[-1, 0] == 144
    assert task.train.y[0] == 112 and task.test.y[-1] == 432


def test_missing_file_reports_path(tmp_path):
    missing = tmp_path / "nope.csv"
    with pytest.raises(FileNotFoundError, match="nope.csv"):
        load_dataset(missing, "airline")


def test_wrong_row_count(tmp_path):
    path = tmp_path / "short.csv"
    path.write_text("t,y\n" + "".join(f"{i},{i}\n" for i in range(1, 11)))
    with pytest.raises(DatasetIntegrityError) as info:
        load_dataset(path, "airline")
    assert info.value.code == "E_DATASET_INTEGRITY"


def test_riverflow_override(tmp_path, monkeypatch):
    path = tmp_path / "river.csv"
    path.write_text("t,y\n" + "".join(f"{i},{10 + math.sin(i)}\n" for i in range(1, 349)))
    monkeypatch.setenv("GCSM_RIVERFLOW_CSV", str(path))
    task = load_dataset(None, "riverflow")
    assert (len(task.train), len(task.test)) == (174, 174)


def test_stand_in_has_dataset_shape():
    task = synthetic_stand_in("riverflow")
    assert (len(task.train), len(task.test)) == (174, 174)
    assert task.provenance == "synthetic stand-in"


# ---------------------------------------------------------------------------
# benchmark


def small_tasks():
    tasks = gen_synthetic(0, SMALL_SYNTHETIC)
    tasks["airline"] = load_dataset(None, "airline")
    tasks["riverflow"] = synthetic_stand_in("riverflow")
    return tasks


@pytest.fixture(scope="module")
def small_result():
    return run_benchmark(small_tasks(), ALL_KERNELS, seed=1, config=TINY)


def test_benchmark_table_shape(small_result):
    assert len(small_result.cells) == 30
    assert all(c.error is None for c in small_result.cells), [c.error for c in small_result.cells if c.error]
    assert all(math.isfinite(c.mae) for c in small_result.cells)


def test_benchmark_real_task_artifacts(small_result):
    for name in ("airline", "riverflow"):
        grams = small_result.grams[name]
        assert set(grams) == {"SM", "GCSM", "absdiff"}
        np.testing.assert_allclose(grams["absdiff"], np.abs(grams["GCSM"] - grams["SM"]))


def test_airline_gcsm_reuses_sm_parameters(small_result):
    sm = small_result.cell("airline", "SM").spec
    gcsm = small_result.cell("airline", "GCSM").spec
    assert gcsm["delays_enabled"] is False
    for a, b in zip(sm["components"], gcsm["components"]):
        assert (a["w"], a["mu"], a["sigma2"]) == (b["w"], b["mu"], b["sigma2"])


def test_trained_diag_decomposition(small_result):
    for name in ("airline", "riverflow"):
        spec = kernel_from_dict(small_result.cell(name, "GCSM").spec)
        terms = gcsm_cross_terms_at_zero(spec.components, spec.delays_enabled)
        grams = small_result.grams[name]
        assert np.diag(grams["GCSM"]).min() > 0 and np.diag(grams["SM"]).min() > 0
        assert terms.sum() == pytest.approx(grams["GCSM"][0, 0], rel=1e-10)
        np.testing.assert_allclose(small_result.cross_terms[name], terms)


def test_benchmark_reproducible(small_result):
    again = run_benchmark(small_tasks(), ALL_KERNELS, seed=1, config=TINY)
    assert [c.mae for c in again.cells] == [c.mae for c in small_result.cells]


def test_benchmark_parallel_matches_serial(monkeypatch):
    tasks = gen_synthetic(5, SMALL_SYNTHETIC)
    serial = run_benchmark(tasks, ("SM", "GCSM"), seed=5, config=TINY)
    monkeypatch.setenv("GCSM_THREADS", "2")
    parallel = run_benchmark(tasks, ("SM", "GCSM"), seed=5, config=TINY)
    assert [(c.task, c.kernel, c.mae) for c in serial.cells] == [(c.task, c.kernel, c.mae) for c in parallel.cells]


def test_failed_cells_are_reported(monkeypatch, tmp_path):
    monkeypatch.setenv("GCSM_RIVERFLOW_CSV", str(tmp_path / "absent.csv"))
    result = run_suite("riverflow", ("SM",), seed=0, config=TINY)
    assert len(result.cells) == 1 and "absent.csv" in result.cells[0].error


def test_write_results(tmp_path, small_result):
    write_results(small_result, tmp_path)
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert lines[0] == "task,kernel,mae,nlml,seconds"
    assert len(lines) == 31 and all(line.endswith(",") for line in lines[1:])
    doc = json.loads((tmp_path / "results.json").read_text())
    assert len(doc["cells"]) == 30 and "seconds" not in doc["cells"][0]
    for name in ("airline", "riverflow"):
        for key in ("SM", "GCSM", "absdiff"):
            K = np.loadtxt(tmp_path / f"gram_{name}_{key}.csv", delimiter=",")
            assert K.shape == (174, 174) if name == "riverflow" else K.shape == (96, 96)


def test_write_results_nan_is_null(tmp_path):
    result = ExperimentResult(cells=[CellResult("airline", "SM", error="boom")])
    write_results(result, tmp_path, timings=True)
    doc = json.loads((tmp_path / "results.json").read_text())
    assert doc["cells"][0]["mae"] is None
    assert (tmp_path / "results.csv").read_text().splitlines()[1].startswith("airline,SM,nan,nan,")


def test_bundled_file_present():
    assert bundled_path("airline").exists()
