import math

import numpy as np
import pytest

from rfsvm.errors import SizeError, ValidationError
from rfsvm.harness import (
    CSV_COLUMNS,
    ExperimentConfig,
    RunResult,
    best_lambda_accuracy,
    curve_job,
    make_test,
    make_train,
    bandwidth_for,
    rows_to_csv,
    run,
    run_learning_curve,
    run_sweep,
    summarize,
)


def small_sweep(**kw):
    base = dict(task="sweep", m=60, lambda_grid=[1e-3, 1e-1, 10.0], n_features=[1, 4], pool_factor=5,
                repeats=2, test_size=400, seed=3, epochs=5)
    base.update(kw)
    return ExperimentConfig(**base)


def small_curve(**kw):
    base = dict(task="curve", methods=["rfsvm-unif", "rfsvm-opt"], m_grid=[40, 80], lambda_grid=[1e-2, 1.0],
                pool_factor=5, repeats=2, test_size=300, seed=1, epochs=5)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def sweep():
    return run_sweep(small_sweep())


def test_sweep_shapes(sweep):
    # ksvm: 3 lambdas; each rfsvm method: 2 feature counts x 3 lambdas
    assert len(sweep.results) == 3 + 2 * 6
    assert all(len(r.accuracies) == 2 for r in sweep.results)
    assert len(sweep.rows) == 2 * len(sweep.results)


def test_nine_lambda_grid_gives_nine_results():
    cfg = small_sweep(methods=["rfsvm-unif"], lambda_grid=[10.0**k for k in range(-7, 2)], n_features=[2],
                      repeats=3)
    exp = run_sweep(cfg)
    assert len(exp.results) == 9 and all(len(r.accuracies) == 3 for r in exp.results)


def test_accuracy_and_risk_are_complementary(sweep):
    for row in sweep.rows:
        assert row["accuracy"] + row["zero_one_risk"] == 1.0
        assert row["excess_risk"] == row["zero_one_risk"] - 0.1


def test_shared_test_set(sweep):
    digests = {r.test_digest for r in sweep.results}
    assert digests == {sweep.manifest["datasets"]["test"]}


def test_sweep_is_deterministic(sweep):
    again = run_sweep(small_sweep())
    assert rows_to_csv(again.rows) == rows_to_csv(sweep.rows)
    assert again.manifest == sweep.manifest


def test_threads_do_not_change_output(sweep):
    parallel = run_sweep(small_sweep(), threads=2)
    assert rows_to_csv(parallel.rows) == rows_to_csv(sweep.rows)


def test_csv_columns(sweep):
    lines = rows_to_csv(sweep.rows).splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == len(sweep.rows) + 1
    timed = rows_to_csv(sweep.rows, timing=True).splitlines()
    assert all(line.split(",")[7] for line in timed[1:])
    assert all(line.split(",")[7] == "" for line in lines[1:])


def test_single_cell_rerun_from_manifest(sweep):
    # the recorded config alone rebuilds the inputs of every cell
    cfg = ExperimentConfig(**sweep.manifest["config"])
    train = make_train(cfg, cfg.m)
    assert train.digest() == sweep.manifest["datasets"]["train"]
    assert make_test(cfg).digest() == sweep.manifest["datasets"]["test"]
    assert bandwidth_for(cfg, train) == sweep.manifest["bandwidth"][str(cfg.m)]


def test_curve_shapes_and_rerun():
    cfg = small_curve()
    exp = run_learning_curve(cfg)
    assert [(r.method, r.m, r.n_features) for r in exp.results] == [
        ("rfsvm-unif", 40, cfg.features_for(40)), ("rfsvm-unif", 80, cfg.features_for(80)),
        ("rfsvm-opt", 40, cfg.features_for(40)), ("rfsvm-opt", 80, cfg.features_for(80)),
    ]
    assert cfg.features_for(40) == math.ceil(2 * math.log(40) ** 2)
    row = exp.rows[0]
    train = make_train(cfg, row["m"])
    (solo,) = curve_job(cfg, row["method"], row["m"], row["repeat"], train, make_test(cfg),
                        bandwidth_for(cfg, train))
    assert {k: v for k, v in solo.items() if k != "wall_ms"} == {k: v for k, v in row.items() if k != "wall_ms"}
    assert rows_to_csv(run_learning_curve(cfg, threads=2).rows) == rows_to_csv(exp.rows)


def test_single_feature_curve_has_an_excess_risk_floor():
    # with c = 0 every point uses one feature; this run recorded excess risks of 0.30-0.38
    cfg = small_curve(feature_constant=0, m_grid=[100, 200], test_size=5000, repeats=3)
    exp = run_learning_curve(cfg)
    assert all(r.n_features == 1 for r in exp.results)
    assert min(r.mean_excess for r in exp.results) > 0.25


def test_compare_task_drops_kernel_baseline():
    cfg = small_sweep(task="compare", n_features=[2], repeats=1)
    assert cfg.methods == ("rfsvm-unif", "rfsvm-opt")
    assert {r.method for r in run(cfg).results} == {"rfsvm-unif", "rfsvm-opt"}


def test_ksvm_guard():
    with pytest.raises(SizeError):
        run_sweep(small_sweep(m=20001, methods=["ksvm"]))


def test_summarize_examples():
    r = RunResult("ksvm", 10, 0, 0.1, [0.8, 0.9], [0.1, 0.0], [1, 2], [0.1, 0.1], [0, 0])
    (row,) = summarize([r])
    assert row["mean"] == pytest.approx(0.85)
    assert row["std"] == pytest.approx(0.0707, abs=1e-4)
    assert (row["min"], row["max"]) == (0.8, 0.9)
    single = RunResult("ksvm", 10, 0, 0.1, [0.7], [0.2], [1], [0.1], [0])
    assert summarize([single])[0]["std"] == 0.0
    shuffled = RunResult("ksvm", 10, 0, 0.1, [0.9, 0.8], [0.0, 0.1], [2, 1], [0.1, 0.1], [0, 0])
    assert summarize([shuffled]) == summarize([r])
    with pytest.raises(ValidationError):
        summarize([])


def test_summary_order_is_deterministic(sweep):
    assert summarize(list(reversed(sweep.results))) == summarize(sweep.results)


def test_best_lambda(sweep):
    lam, acc = best_lambda_accuracy(sweep.results, "ksvm")
    assert lam in (1e-3, 1e-1, 10.0)
    assert acc == max(r.mean for r in sweep.results if r.method == "ksvm")
    with pytest.raises(ValidationError):
        best_lambda_accuracy(sweep.results, "rfsvm-opt", n_features=99)


def test_config_errors_point_at_the_field():
    with pytest.raises(ValidationError, match=r"^/repeats: "):
        ExperimentConfig.from_json('{"repeats": 0}')
    with pytest.raises(ValidationError, match=r"^/methods/1: "):
        ExperimentConfig.from_json('{"methods": ["ksvm", "svm"]}')
    with pytest.raises(ValidationError, match=r"^/: "):
        ExperimentConfig.from_json('{"repeats": ')
    with pytest.raises(ValidationError, match=r"^/: "):
        ExperimentConfig.from_json('{"bogus": 1}')
    with pytest.raises(ValidationError, match=r"^/m_grid"):
        ExperimentConfig(task="curve", m_grid=(100, 50))


def test_config_round_trip():
    cfg = small_sweep()
    assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg
    assert ExperimentConfig.from_dict(cfg.to_dict()).digest() == cfg.digest()
    assert ExperimentConfig().lambda_grid == tuple(10.0**k for k in range(-7, 2))
    assert np.allclose(np.log10(ExperimentConfig().lambda_grid), np.arange(-7, 2))
