"""Seeded experiment runs: regularization sweeps and learning curves.

Work is split into independent jobs (one per method, feature count, sample
size and repeat); every job derives its seeds from the base seed through
fixed stream indices, so any job can be re-run alone and the merged output
does not depend on how many workers ran it.

Seed streams (appended after the base seed)::

    (10, m)             training set of size m
    (11,)               shared test set
    (12, m)             bandwidth subsample
    (13, N, repeat)     feature draw (pool for "opt", direct draw for "unif")
    (14, repeat)        solver sample order
    (15, m, repeat)     train/validation split for lambda selection
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from ._rng import derive_seed
from .data import LabeledDataset, SyntheticSpec, gen_circle_annulus, split
from .errors import SizeError, ValidationError
from .features import FeatureSpec, bandwidth_heuristic, embed, gaussian_gram, sample_features
from .selection import SelectionConfig, select_features
from .solver import KSVM_MAX_SAMPLES, TrainConfig, pointwise_loss, train_ksvm, train_rfsvm

METHODS = ("ksvm", "rfsvm-unif", "rfsvm-opt")
TASKS = ("sweep", "curve", "compare")
CSV_COLUMNS = ("method", "m", "n_features", "lambda", "repeat", "accuracy", "excess_risk", "wall_ms", "seed")

S_TRAIN, S_TEST, S_BANDWIDTH, S_FEATURES, S_SOLVER, S_SPLIT = 10, 11, 12, 13, 14, 15


def default_lambda_grid():
    return tuple(10.0**k for k in range(-7, 2))


CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "task": {"enum": list(TASKS)},
        "methods": {"type": "array", "minItems": 1, "items": {"enum": list(METHODS)}},
        "m": {"type": "integer", "minimum": 2},
        "m_grid": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 2}},
        "dim": {"type": "integer", "minimum": 2},
        "flip_prob": {"type": "number", "minimum": 0, "exclusiveMaximum": 0.5},
        "lambda_grid": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "n_features": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "feature_constant": {"type": "number", "minimum": 0},
        "pool_factor": {"type": "integer", "minimum": 1},
        "probe_fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "selection_ridge": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "weighted": {"type": "boolean"},
        "repeats": {"type": "integer", "minimum": 1},
        "test_size": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer"},
        "bandwidth_cap": {"type": "integer", "minimum": 2},
        "validation_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "epochs": {"type": "integer", "minimum": 1},
        "tolerance": {"type": "number", "exclusiveMinimum": 0},
        "solver": {"enum": ["pegasos", "dcd"]},
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "sweep"
    methods: tuple = METHODS
    m: int = 1000
    m_grid: tuple = (500, 1000, 2000, 4000)
    dim: int = 2
    flip_prob: float = 0.1
    lambda_grid: tuple = field(default_factory=default_lambda_grid)
    n_features: tuple = (1, 3, 5, 10, 20)
    feature_constant: float = 2.0
    pool_factor: int = 100
    probe_fraction: float = 0.3
    selection_ridge: float | None = None
    weighted: bool = True
    repeats: int = 10
    test_size: int = 100000
    seed: int = 0
    bandwidth_cap: int = 1000
    validation_fraction: float = 0.2
    epochs: int = 20
    tolerance: float = 1e-6
    solver: str = "pegasos"

    def __post_init__(self):
        for name in ("methods", "m_grid", "lambda_grid", "n_features"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.task not in TASKS:
            raise ValidationError(f"/task: unknown task {self.task!r}")
        if not self.methods or any(mt not in METHODS for mt in self.methods):
            raise ValidationError(f"/methods: expected a non-empty subset of {METHODS}")
        if self.repeats < 1:
            raise ValidationError("/repeats: must be >= 1")
        if not self.lambda_grid or any(not lam > 0 for lam in self.lambda_grid):
            raise ValidationError("/lambda_grid: must be non-empty and positive")
        if self.task == "compare" and "ksvm" in self.methods:
            object.__setattr__(self, "methods", tuple(mt for mt in self.methods if mt != "ksvm"))
            if not self.methods:
                raise ValidationError("/methods: compare needs rfsvm-unif and/or rfsvm-opt")
        if self.task in ("sweep", "compare") and not self.n_features:
            raise ValidationError("/n_features: must be non-empty")
        if self.task == "curve":
            if not self.m_grid or any(b <= a for a, b in zip(self.m_grid, self.m_grid[1:])):
                raise ValidationError("/m_grid: must be non-empty and strictly increasing")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        import jsonschema

        try:
            jsonschema.validate(d, CONFIG_SCHEMA)
        except jsonschema.ValidationError as exc:
            pointer = "/" + "/".join(str(p) for p in exc.absolute_path)
            raise ValidationError(f"{pointer}: {exc.message}") from None
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"/: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
        if not isinstance(d, dict):
            raise ValidationError("/: config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v) for f in fields(self)}

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    def features_for(self, m: int) -> int:
        """Curve feature budget ``max(1, ceil(c ln^2 m))``."""
        return max(1, math.ceil(self.feature_constant * math.log(m) ** 2))


@dataclass
class RunResult:
    method: str
    m: int
    n_features: int
    lam: float | None
    accuracies: list
    excess_risks: list
    seeds: list
    lambdas: list
    wall_ms: list
    test_digest: str = ""

    @property
    def mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def std(self) -> float:
        return float(np.std(self.accuracies, ddof=1)) if len(self.accuracies) > 1 else 0.0

    @property
    def mean_excess(self) -> float:
        return float(np.mean(self.excess_risks))

    @property
    def std_excess(self) -> float:
        return float(np.std(self.excess_risks, ddof=1)) if len(self.excess_risks) > 1 else 0.0


@dataclass
class Experiment:
    """Everything a run produced: per-repeat rows, aggregated results and the manifest."""

    config: ExperimentConfig
    rows: list
    results: list
    manifest: dict


# -- shared setup -----------------------------------------------------------


def _synthetic(cfg: ExperimentConfig) -> SyntheticSpec:
    return SyntheticSpec(dim=cfg.dim, flip_prob=cfg.flip_prob, seed=cfg.seed)


def make_train(cfg: ExperimentConfig, m: int) -> LabeledDataset:
    return gen_circle_annulus(_synthetic(cfg), m, seed=derive_seed(cfg.seed, S_TRAIN, m))


def make_test(cfg: ExperimentConfig) -> LabeledDataset:
    return gen_circle_annulus(_synthetic(cfg), cfg.test_size, seed=derive_seed(cfg.seed, S_TEST))


def bandwidth_for(cfg: ExperimentConfig, train: LabeledDataset) -> float:
    return bandwidth_heuristic(train.points, cfg.bandwidth_cap, seed=derive_seed(cfg.seed, S_BANDWIDTH, len(train)))


def draw_features(cfg: ExperimentConfig, method: str, train: LabeledDataset, gamma: float, n: int, repeat: int):
    seed = derive_seed(cfg.seed, S_FEATURES, n, repeat)
    spec = FeatureSpec(dim=train.dim, bandwidth=gamma, seed=seed)
    if method == "rfsvm-unif":
        return sample_features(spec, n, seed)
    m = len(train)
    sel = SelectionConfig(
        pool_size=cfg.pool_factor * n,
        probe_count=min(m, math.ceil(cfg.probe_fraction * m)),
        ridge=cfg.selection_ridge if cfg.selection_ridge is not None else 1.0 / m,
        target_count=n,
        seed=seed,
        weighted=cfg.weighted,
    )
    fs, _ = select_features(spec, train.points, sel)
    return fs


def _zero_one(labels, scores):
    """Integer error count so that accuracy and risk are complementary fractions."""
    return int(np.count_nonzero(pointwise_loss(labels, scores, "zero-one")))


def _cell_row(cfg, method, m, n, lam, repeat, errors, n_test, seed, wall):
    risk = errors / n_test
    return {
        "method": method,
        "m": m,
        "n_features": n,
        "lambda": lam,
        "repeat": repeat,
        "accuracy": 1.0 - risk,
        "zero_one_risk": risk,
        "excess_risk": risk - cfg.flip_prob,
        "wall_ms": wall,
        "seed": seed,
    }


def _ms(t0):
    return (time.perf_counter() - t0) * 1e3


# -- jobs -------------------------------------------------------------------


def _ksvm_scores(X, train, gamma, coefs, chunk=4096):
    """Test scores for several coefficient vectors in one pass over the kernel."""
    out = np.empty((X.shape[0], coefs.shape[1]))
    active = np.flatnonzero(np.any(coefs != 0, axis=1))
    S, C = train.points[active], coefs[active]
    for lo in range(0, X.shape[0], chunk):
        out[lo : lo + chunk] = gaussian_gram(X[lo : lo + chunk], S, gamma) @ C
    return out


def _fit_grid(cfg, method, fit, gamma, fs, lams, seed):
    """Train one model per lambda on ``fit``; returns a list of models."""
    models = []
    if method == "ksvm":
        K = gaussian_gram(fit.points, fit.points, gamma)
        for lam in lams:
            tc = TrainConfig(lam, cfg.epochs, seed, cfg.tolerance, cfg.solver)
            models.append(train_ksvm(fit, gamma, tc, gram=K))
    else:
        Z = embed(fs, fit.points)
        for lam in lams:
            tc = TrainConfig(lam, cfg.epochs, seed, cfg.tolerance, cfg.solver)
            models.append(train_rfsvm(fit, fs, tc, embedded=Z))
    return models


def _scores(method, models, X, fit, gamma, fs):
    if method == "ksvm":
        return _ksvm_scores(X, fit, gamma, np.column_stack([md.alphas for md in models]))
    Z = embed(fs, X)
    return Z @ np.column_stack([md.weights for md in models])


def sweep_job(cfg, method, n, repeat, train, test, gamma):
    """All lambda cells of one (method, N, repeat) combination."""
    with threadpool_limits(1):
        t0 = time.perf_counter()
        seed = derive_seed(cfg.seed, S_SOLVER, repeat)
        fs = None if method == "ksvm" else draw_features(cfg, method, train, gamma, n, repeat)
        setup = _ms(t0)
        rows = []
        models = _fit_grid(cfg, method, train, gamma, fs, cfg.lambda_grid, seed)
        scores = _scores(method, models, test.points, train, gamma, fs)
        wall = (_ms(t0) - setup) / len(models) + setup
        for j, lam in enumerate(cfg.lambda_grid):
            errs = _zero_one(test.labels, scores[:, j])
            rows.append(_cell_row(cfg, method, len(train), n, lam, repeat, errs, len(test), seed, wall))
        return rows


def curve_job(cfg, method, m, repeat, train, test, gamma):
    """One learning-curve point: pick lambda on a validation split, refit, score on test."""
    with threadpool_limits(1):
        t0 = time.perf_counter()
        n = cfg.features_for(m) if method != "ksvm" else 0
        seed = derive_seed(cfg.seed, S_SOLVER, repeat)
        fs = None if method == "ksvm" else draw_features(cfg, method, train, gamma, n, repeat)
        fit, val = split(train, 1.0 - cfg.validation_fraction, derive_seed(cfg.seed, S_SPLIT, m, repeat))
        models = _fit_grid(cfg, method, fit, gamma, fs, cfg.lambda_grid, seed)
        val_scores = _scores(method, models, val.points, fit, gamma, fs)
        val_err = [_zero_one(val.labels, val_scores[:, j]) for j in range(len(models))]
        # fewest validation errors; ties go to the larger lambda
        best = min(range(len(models)), key=lambda j: (val_err[j], -cfg.lambda_grid[j]))
        lam = cfg.lambda_grid[best]
        (final,) = _fit_grid(cfg, method, train, gamma, fs, (lam,), seed)
        scores = _scores(method, [final], test.points, train, gamma, fs)[:, 0]
        errs = _zero_one(test.labels, scores)
        return [_cell_row(cfg, method, m, n, lam, repeat, errs, len(test), seed, _ms(t0))]


def _run_jobs(jobs, threads):
    if threads <= 1 or len(jobs) <= 1:
        return [fn(*args) for fn, args in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, *args) for fn, args in jobs]
        return [f.result() for f in futures]


def _row_key(row):
    return (METHODS.index(row["method"]), row["m"], row["n_features"], row["lambda"], row["repeat"])


def _aggregate(rows, by_lambda, test_digest):
    groups = {}
    for r in sorted(rows, key=_row_key):
        key = (r["method"], r["m"], r["n_features"], r["lambda"] if by_lambda else None)
        groups.setdefault(key, []).append(r)
    results = []
    for (method, m, n, lam), rs in groups.items():
        results.append(RunResult(
            method, m, n, lam,
            accuracies=[r["accuracy"] for r in rs],
            excess_risks=[r["excess_risk"] for r in rs],
            seeds=[r["seed"] for r in rs],
            lambdas=[r["lambda"] for r in rs],
            wall_ms=[r["wall_ms"] for r in rs],
            test_digest=test_digest,
        ))
    return results


def _manifest(cfg, datasets, gamma_by_m):
    return {
        "toolkit": "rfsvm",
        "version": __version__,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "datasets": {name: d.digest() for name, d in datasets.items()},
        "bandwidth": {str(m): g for m, g in gamma_by_m.items()},
        "bandwidth_cap": cfg.bandwidth_cap,
        "selection_ridge": cfg.selection_ridge if cfg.selection_ridge is not None else "1/m",
        "seed_streams": {"train": [S_TRAIN, "m"], "test": [S_TEST], "bandwidth": [S_BANDWIDTH, "m"],
                         "features": [S_FEATURES, "N", "repeat"], "solver": [S_SOLVER, "repeat"],
                         "split": [S_SPLIT, "m", "repeat"]},
    }


def run_sweep(cfg: ExperimentConfig, threads: int = 1) -> Experiment:
    """Accuracy over the lambda grid for every method and feature count at one sample size."""
    if "ksvm" in cfg.methods and cfg.m > KSVM_MAX_SAMPLES:
        raise SizeError(f"kernel SVM is limited to {KSVM_MAX_SAMPLES} samples, got m={cfg.m}")
    train, test = make_train(cfg, cfg.m), make_test(cfg)
    gamma = bandwidth_for(cfg, train)
    jobs = []
    for method in cfg.methods:
        counts = (0,) if method == "ksvm" else cfg.n_features
        for n in counts:
            for rep in range(cfg.repeats):
                jobs.append((sweep_job, (cfg, method, n, rep, train, test, gamma)))
    rows = sorted((r for batch in _run_jobs(jobs, threads) for r in batch), key=_row_key)
    manifest = _manifest(cfg, {"train": train, "test": test}, {cfg.m: gamma})
    return Experiment(cfg, rows, _aggregate(rows, True, test.digest()), manifest)


def run_learning_curve(cfg: ExperimentConfig, threads: int = 1) -> Experiment:
    """Excess risk against sample size with ``N = ceil(c ln^2 m)`` features and validated lambda."""
    if "ksvm" in cfg.methods and max(cfg.m_grid) > KSVM_MAX_SAMPLES:
        raise SizeError(f"kernel SVM is limited to {KSVM_MAX_SAMPLES} samples")
    test = make_test(cfg)
    datasets = {"test": test}
    gammas = {}
    jobs = []
    for m in cfg.m_grid:
        train = make_train(cfg, m)
        gammas[m] = bandwidth_for(cfg, train)
        datasets[f"train_{m}"] = train
        for method in cfg.methods:
            for rep in range(cfg.repeats):
                jobs.append((curve_job, (cfg, method, m, rep, train, test, gammas[m])))
    rows = sorted((r for batch in _run_jobs(jobs, threads) for r in batch), key=_row_key)
    return Experiment(cfg, rows, _aggregate(rows, False, test.digest()), _manifest(cfg, datasets, gammas))


def run(cfg: ExperimentConfig, threads: int = 1) -> Experiment:
    """Dispatch on ``cfg.task``; "compare" is a sweep over the two feature-selection methods."""
    return run_learning_curve(cfg, threads) if cfg.task == "curve" else run_sweep(cfg, threads)


# -- reporting ----------------------------------------------------------------


def summarize(results) -> list[dict]:
    """Mean, sample std (n-1), min and max of accuracy per cell, in a fixed order."""
    if not results:
        raise ValidationError("nothing to summarize")
    table = []
    for r in sorted(results, key=lambda r: (METHODS.index(r.method) if r.method in METHODS else 99,
                                           r.m, r.n_features, -1.0 if r.lam is None else r.lam)):
        acc = sorted(r.accuracies)
        exc = sorted(r.excess_risks)
        table.append({
            "method": r.method, "m": r.m, "n_features": r.n_features, "lambda": r.lam,
            "repeats": len(acc),
            "mean": float(np.mean(acc)),
            "std": float(np.std(acc, ddof=1)) if len(acc) > 1 else 0.0,
            "min": acc[0], "max": acc[-1],
            "mean_excess_risk": float(np.mean(exc)),
            "std_excess_risk": float(np.std(exc, ddof=1)) if len(exc) > 1 else 0.0,
        })
    return table


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, timing: bool = False) -> str:
    """Per-repeat results. ``wall_ms`` is left blank unless ``timing`` is set,
    keeping the file a pure function of the configuration."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) if (c != "wall_ms" or timing) else "" for c in CSV_COLUMNS])
    return buf.getvalue()


def summary_to_csv(table) -> str:
    buf = io.StringIO()
    cols = list(table[0].keys())
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in table:
        w.writerow([_fmt(row[c]) for c in cols])
    return buf.getvalue()


def best_lambda_accuracy(results, method, n_features=None) -> tuple[float, float]:
    """``(lambda, mean accuracy)`` of the best lambda cell for a method in a sweep."""
    cells = [r for r in results if r.method == method and (n_features is None or r.n_features == n_features)]
    if not cells:
        raise ValidationError(f"no results for {method} with N={n_features}")
    best = max(cells, key=lambda r: (r.mean, -r.lam))
    return best.lam, best.mean


def to_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2)

