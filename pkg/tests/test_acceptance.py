"""Acceptance gate: one test per criterion, each printing a single PASS/FAIL line.

Criteria 6 and 7 run the desk-scale experiments (a few minutes each).
"""

import itertools
import json
import math
import os
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from oracles import grid_refine_oracle
from rfsvm import io as rio
from rfsvm.cli import main as cli_main
from rfsvm.data import SyntheticSpec, bayes_classify, gen_circle_annulus
from rfsvm.features import FeatureSpec, embed, kernel_approx, kernel_exact, sample_features
from rfsvm.harness import ExperimentConfig, best_lambda_accuracy, run_learning_curve, run_sweep
from rfsvm.selection import build_probe_matrix, compute_leverage, empirical_dof, resampling_distribution
from rfsvm.solver import TrainConfig, train_rfsvm
from rfsvm.spectrum import (
    DecayFit,
    degrees_of_freedom,
    empirical_spectrum,
    feature_count,
    fit_decay,
    plan_realizable,
    plan_separation,
)

THREADS = max(2, os.cpu_count() or 1)


def verdict(n, checks, elapsed, limit):
    """Record and print the criterion line, then fail the test if any check failed."""
    checks = dict(checks)
    checks[f"runtime {elapsed:.1f}s < {limit}s"] = elapsed < limit
    ok = all(checks.values())
    failed = [name for name, good in checks.items() if not good]
    detail = "; ".join(checks) if ok else "failed: " + "; ".join(failed)
    line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
    ACCEPTANCE_LINES[n] = line
    print(line)
    assert ok, line


def test_criterion_01_kernel_approximation():
    t0 = time.perf_counter()
    fs = sample_features(FeatureSpec(dim=2, bandwidth=1.0), 4096, seed=1)
    pairs = np.random.default_rng(101).uniform(-1, 1, size=(100, 2, 2))
    err = max(abs(kernel_approx(fs, x, y) - kernel_exact(x, y, 1.0)) for x, y in pairs)
    diag = max(abs(kernel_approx(fs, x, x) - 1.0) for x, _ in pairs)
    verdict(1, {f"max |k_N - k| = {err:.4f} <= 0.05": err <= 0.05,
                f"max |k_N(x,x) - 1| = {diag:.1e} (rounding only)": diag <= 1e-12},
            time.perf_counter() - t0, 5)


def test_criterion_02_leverage_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    worst_elem = worst_trace = 0.0
    for _ in range(20):
        rows, cols = int(rng.integers(1, 9)), int(rng.integers(1, 13))
        phi = rng.normal(size=(rows, cols)) / math.sqrt(cols)
        mu = float(10 ** rng.uniform(-3, 1))
        S = phi @ phi.T
        dense = np.diag(S @ np.linalg.inv(S + mu * np.eye(rows)))
        lev = compute_leverage(phi, mu)
        sigma = np.linalg.eigvalsh(S)
        worst_elem = max(worst_elem, float(np.max(np.abs(lev.scores - dense))))
        worst_trace = max(worst_trace, abs(empirical_dof(lev) - float(np.sum(sigma / (sigma + mu)))))
    verdict(2, {f"elementwise {worst_elem:.1e} <= 1e-10": worst_elem <= 1e-10,
                f"trace {worst_trace:.1e} <= 1e-8": worst_trace <= 1e-8},
            time.perf_counter() - t0, 1)


def test_criterion_03_resampling_unbiased():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = 0.0
    for M in range(1, 9):
        pool = sample_features(FeatureSpec(dim=2, bandwidth=0.8), M, seed=M)
        lev = compute_leverage(build_probe_matrix(pool, rng.uniform(-1, 1, size=(5, 2))), 0.05, blocks=2)
        p, a = resampling_distribution(lev)
        for _ in range(10):
            x, y = rng.uniform(-1, 1, size=(2, 2))
            target = kernel_approx(pool, x, y)
            one = sum(p[i] * kernel_approx(pool.subset([i], a[[i]]), x, y) for i in range(M))
            worst = max(worst, abs(one - target))
            if M <= 4:
                two = sum(p[i] * p[j] * kernel_approx(pool.subset([i, j], a[[i, j]]), x, y)
                          for i, j in itertools.product(range(M), repeat=2))
                worst = max(worst, abs(two - target))
    verdict(3, {f"max deviation {worst:.1e} <= 1e-12": worst <= 1e-12}, time.perf_counter() - t0, 1)


def test_criterion_04_solver_oracle():
    t0 = time.perf_counter()
    worst_gap, iterates, bound_ok = 0.0, 0, True
    for inst in range(10):
        rng = np.random.default_rng(400 + inst)
        m, N = int(rng.integers(5, 21)), int(rng.integers(1, 3))
        lam = float(10 ** rng.uniform(-1.5, 0))
        data = gen_circle_annulus(SyntheticSpec(), m, seed=400 + inst)
        fs = sample_features(FeatureSpec(dim=2, bandwidth=1.0), N, seed=400 + inst)
        radius = math.sqrt(2.0 / lam)

        def check(t, w):
            nonlocal bound_ok, iterates
            iterates += 1
            bound_ok &= math.sqrt(float(w @ w)) <= radius

        model = train_rfsvm(data, fs, TrainConfig(lam, epochs=2000, seed=inst, tolerance=1e-15), callback=check)
        ref = grid_refine_oracle(embed(fs, data.points), data.labels, lam)
        worst_gap = max(worst_gap, abs(model.objective - ref))
        bound_ok &= math.sqrt(float(model.weights @ model.weights)) <= radius
    verdict(4, {f"max |objective - oracle| = {worst_gap:.1e} <= 1e-4": worst_gap <= 1e-4,
                f"norm bound on all {iterates} iterates": bound_ok},
            time.perf_counter() - t0, 30)


def test_criterion_05_bayes_risk():
    t0 = time.perf_counter()
    data = gen_circle_annulus(SyntheticSpec(), 100_000, seed=505)
    risk = float(np.mean(bayes_classify(data.points) != data.labels))
    verdict(5, {f"Bayes risk {risk:.4f} = 0.100 +- 0.005": abs(risk - 0.1) <= 0.005}, time.perf_counter() - t0, 5)


def test_criterion_06_sweep():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(task="sweep", m=1000, dim=2, test_size=100_000, repeats=10)
    exp = run_sweep(cfg, threads=THREADS)
    _, ksvm = best_lambda_accuracy(exp.results, "ksvm")
    checks = {f"(a) KSVM best {ksvm:.4f} >= 0.87": ksvm >= 0.87}
    for method in ("rfsvm-unif", "rfsvm-opt"):
        _, n20 = best_lambda_accuracy(exp.results, method, 20)
        _, n1 = best_lambda_accuracy(exp.results, method, 1)
        checks[f"(b) {method} N=20 {n20:.4f} within 0.02 of KSVM"] = abs(ksvm - n20) <= 0.02
        checks[f"(c) {method} N=20 {n20:.4f} >= N=1 {n1:.4f}"] = n20 >= n1
    verdict(6, checks, time.perf_counter() - t0, 600)


def test_criterion_07_learning_curve():
    t0 = time.perf_counter()
    cfg = ExperimentConfig(task="curve", methods=("rfsvm-unif", "rfsvm-opt"), m_grid=(500, 1000, 2000, 4000),
                           feature_constant=2, repeats=10, test_size=100_000)
    exp = run_learning_curve(cfg, threads=THREADS)
    checks = {}
    excess = {}
    for method in cfg.methods:
        curve = [r.mean_excess for r in sorted(exp.results, key=lambda r: r.m) if r.method == method]
        excess[method] = curve
        inversions = sum(b >= a for a, b in zip(curve, curve[1:]))
        shown = ", ".join(f"{v:.4f}" for v in curve)
        checks[f"{method} excess [{shown}] has {inversions} inversion(s) <= 1"] = inversions <= 1
    opt, unif = excess["rfsvm-opt"][-1], excess["rfsvm-unif"][-1]
    checks[f"m=4000 opt {opt:.4f} <= unif {unif:.4f}"] = opt <= unif
    verdict(7, checks, time.perf_counter() - t0, 900)


def test_criterion_08_spectral_diagnostics():
    t0 = time.perf_counter()
    i = np.arange(1, 61)
    poly = fit_decay(1.7 * i**-2.3, "poly")
    sub = fit_decay(0.9 * np.exp(-0.4 * np.sqrt(i)), "subexp", d=2)
    err_poly = max(abs(poly.params["c1"] - 1.7), abs(poly.params["c2"] - 2.3))
    err_sub = max(abs(sub.params["c3"] - 0.9), abs(sub.params["c4"] - 0.4))
    X = np.random.default_rng(808).uniform(-1, 1, size=(500, 2))
    est = empirical_spectrum(X, 0.5)
    r_poly, r_sub = fit_decay(est, "poly").residual, fit_decay(est, "subexp").residual
    mus = np.logspace(-5, 1, 10)
    dof = np.array([degrees_of_freedom(est, mu) for mu in mus])
    decreasing = bool(np.all(np.diff(dof) < 0))
    slopes = np.diff(dof) / np.diff(mus)
    convex = bool(np.all(np.diff(slopes) >= -1e-12))
    verdict(8, {f"poly fit error {err_poly:.1e} <= 1e-6": err_poly <= 1e-6,
                f"subexp fit error {err_sub:.1e} <= 1e-6": err_sub <= 1e-6,
                f"residual subexp {r_sub:.3g} < poly {r_poly:.3g}": r_sub < r_poly,
                "d(mu) decreasing": decreasing, "d(mu) convex": convex},
            time.perf_counter() - t0, 30)


def test_criterion_09_planner_arithmetic():
    t0 = time.perf_counter()
    n = feature_count(10, 0.1)
    lam = plan_realizable(10_000, DecayFit.polynomial(1.0, 2.0), 0.1).lam
    gamma = plan_separation(10**6, 0.2, 2, 0.1).gamma
    verdict(9, {f"feature_count(10, 0.1) = {n}": n == 369,
                f"realizable lambda = {lam:.6g}": abs(lam - 0.01) <= 1e-12,
                f"separation gamma = {gamma:.6f}": abs(gamma - 0.0538) <= 1e-4},
            time.perf_counter() - t0, 1)


def _pipeline(root, threads):
    root.mkdir()
    steps = [
        ["gen-data", "--m", "300", "--seed", "1", "--out", root / "train.csv"],
        ["gen-data", "--m", "2000", "--seed", "2", "--out", root / "test.csv"],
        ["select", "--data", root / "train.csv", "--target", "20", "--seed", "3", "--out", root / "fs.json"],
        ["train", "--data", root / "train.csv", "--features", root / "fs.json", "--lambda", "1e-3",
         "--out", root / "model.json"],
        ["evaluate", "--model", root / "model.json", "--data", root / "test.csv", "--out", root / "eval.json"],
        ["predict", "--model", root / "model.json", "--data", root / "test.csv", "--out", root / "pred.csv"],
        ["spectrum", "--data", root / "train.csv", "--out", root / "eig.csv"],
        ["sweep", "--config", root / "sweep.json", "--threads", str(threads), "--out", root / "sweep.csv"],
        ["curve", "--config", root / "curve.json", "--threads", str(threads), "--out", root / "curve.csv"],
    ]
    (root / "sweep.json").write_text(json.dumps({"m": 150, "n_features": [1, 5], "lambda_grid": [1e-4, 1e-2, 1.0],
                                                 "repeats": 3, "test_size": 2000, "pool_factor": 10}))
    (root / "curve.json").write_text(json.dumps({"methods": ["rfsvm-unif", "rfsvm-opt"], "m_grid": [100, 200],
                                                 "lambda_grid": [1e-3, 1e-1], "repeats": 2, "test_size": 2000,
                                                 "pool_factor": 10}))
    codes = [cli_main([str(a) for a in step]) for step in steps]
    return codes, {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_criterion_10_determinism_and_atomicity(tmp_path, monkeypatch):
    t0 = time.perf_counter()
    codes_a, a = _pipeline(tmp_path / "a", threads=1)
    codes_b, b = _pipeline(tmp_path / "b", threads=1)
    codes_c, c = _pipeline(tmp_path / "c", threads=THREADS)
    same = a.keys() == b.keys() and all(a[k] == b[k] for k in a)
    same_threads = a.keys() == c.keys() and all(a[k] == c[k] for k in a)

    # an interrupted write leaves the previous file intact and no temporary behind
    target = tmp_path / "atomic.csv"
    target.write_text("old\n")

    def boom(*args, **kwargs):
        raise KeyboardInterrupt

    monkeypatch.setattr(rio.os, "replace", boom)
    with pytest.raises(KeyboardInterrupt):
        rio.atomic_write(target, "new\n" * 1000)
    monkeypatch.undo()
    atomic = target.read_text() == "old\n" and not list(tmp_path.glob(".atomic.csv.*"))
    leftovers = [p for p in tmp_path.rglob("*.tmp")]
    verdict(10, {f"all {len(codes_a) * 3} CLI steps exit 0": not any(codes_a + codes_b + codes_c),
                 f"two runs byte-identical over {len(a)} files": same,
                 f"--threads 1 vs {THREADS} byte-identical": same_threads,
                 "interrupted write leaves old file": atomic and not leftovers},
            time.perf_counter() - t0, 300)
