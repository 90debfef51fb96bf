"""Command-line entry point: ``rfsvm <subcommand> [flags]``.

Exit status: 0 success, 2 validation or usage error, 3 I/O error, 4 numeric failure.
Every declared output is written to a temporary file and renamed into place.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .data import SyntheticSpec, dataset_to_csv, gen_circle_annulus, read_dataset_csv
from .errors import NumericError, ValidationError
from .features import FeatureSet, FeatureSpec, bandwidth_heuristic, sample_features
from .harness import ExperimentConfig, rows_to_csv, run, summarize, summary_to_csv, to_json
from .io import atomic_write
from .selection import SelectionConfig, resampling_distribution, select_features
from .solver import (
    LOSSES,
    SOLVERS,
    TrainConfig,
    evaluate_risk,
    model_from_dict,
    model_to_json,
    objective,
    train_ksvm,
    train_rfsvm,
)
from .spectrum import (
    DecayFit,
    degrees_of_freedom,
    empirical_spectrum,
    fit_decay,
    plan_realizable,
    plan_separation,
)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 2, 3, 4


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _emit(path, text):
    """Write to ``path`` atomically, or to stdout when no path is given."""
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        atomic_write(path, text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _read_text(path) -> str:
    p = Path(path)
    if not p.is_file():
        raise ValidationError(f"{path}: no such file")
    return p.read_text()


def _load_dataset(path):
    if not Path(path).is_file():
        raise ValidationError(f"{path}: no such file")
    return read_dataset_csv(path)


def _load_json(path, what):
    try:
        return json.loads(_read_text(path))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: malformed {what} JSON at line {exc.lineno}: {exc.msg}") from None


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise NumericError("non-finite value in output")


def _gamma(args, data):
    return args.gamma if args.gamma is not None else bandwidth_heuristic(data.points, seed=args.seed)


# -- subcommands ---------------------------------------------------------------


def cmd_gen_data(args):
    spec = SyntheticSpec(dim=args.dim, flip_prob=args.flip_prob, seed=args.seed)
    _emit(args.out, dataset_to_csv(gen_circle_annulus(spec, args.m, seed=args.seed)))


def cmd_select(args):
    data = _load_dataset(args.data)
    m = len(data)
    gamma = _gamma(args, data)
    cfg = SelectionConfig(
        pool_size=args.pool_size if args.pool_size is not None else 100 * args.target,
        probe_count=args.probe_count if args.probe_count is not None else max(1, math.ceil(0.3 * m)),
        ridge=args.ridge if args.ridge is not None else 1.0 / m,
        target_count=args.target,
        seed=args.seed,
        weighted=not args.unweighted,
    )
    fs, lev = select_features(FeatureSpec(dim=data.dim, bandwidth=gamma, seed=args.seed), data.points, cfg)
    r = lev.feature_scores()
    p, _ = resampling_distribution(lev, cfg.weighted)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "r", "p"])
    for i, (ri, pi) in enumerate(zip(r, p)):
        w.writerow([i, repr(float(ri)), repr(float(pi))])
    scores_path = args.scores
    if scores_path is None and args.out not in (None, "-"):
        scores_path = str(Path(args.out).with_suffix("")) + ".scores.csv"
    _check_finite(fs.weights, r)
    _emit(args.out, fs.to_json() + "\n")
    if scores_path is not None:
        atomic_write(scores_path, buf.getvalue())


def _training_report(model, data):
    scores = model.decision_function(data.points)
    report = {loss: evaluate_risk(model, data, loss, scores) for loss in LOSSES}
    report["objective"] = objective(model, data)
    report["m"] = len(data)
    return report


def cmd_train(args):
    data = _load_dataset(args.data)
    cfg = TrainConfig(args.lam, epochs=args.epochs, seed=args.seed, tolerance=args.tolerance, solver=args.solver)
    if args.kernel:
        model = train_ksvm(data, _gamma(args, data), cfg)
    else:
        if args.features is not None:
            fs = FeatureSet.from_dict(_load_json(args.features, "feature set"))
        else:
            spec = FeatureSpec(dim=data.dim, bandwidth=_gamma(args, data), seed=args.seed)
            fs = sample_features(spec, args.n_features, seed=args.seed)
        model = train_rfsvm(data, fs, cfg)
    _check_finite(model.objective)
    _emit(args.out, model_to_json(model) + "\n")
    if args.loss_report is not None:
        atomic_write(args.loss_report, _dumps(_training_report(model, data)))


def cmd_predict(args):
    model = model_from_dict(_load_json(args.model, "model"))
    data = _load_dataset(args.data)
    scores = model.decision_function(data.points)
    _check_finite(scores)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["score", "label"])
    for s in scores:
        w.writerow([repr(float(s)), 1 if s >= 0 else -1])
    _emit(args.out, buf.getvalue())


def cmd_evaluate(args):
    model = model_from_dict(_load_json(args.model, "model"))
    data = _load_dataset(args.data)
    report = _training_report(model, data)
    report["accuracy"] = 1.0 - report["zero-one"]
    _emit(args.out, _dumps(report))


def cmd_spectrum(args):
    data = _load_dataset(args.data)
    gamma = _gamma(args, data)
    est = empirical_spectrum(data.points, gamma)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["index", "value"])
    for i, v in enumerate(est.eigenvalues, start=1):
        w.writerow([i, repr(float(v))])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        fit = fit_decay(est, args.fit)
        plan = plan_realizable(len(data), fit, args.delta) if len(data) >= 2 else None
    mus = args.mu_grid or [10.0**k for k in range(-6, 1)]
    report = {
        "gamma": gamma,
        "m": len(data),
        "raw_min_eigenvalue": est.raw_min,
        "fit": {"kind": fit.kind, "params": fit.params, "residual": fit.residual},
        "dof": [{"mu": mu, "dof": degrees_of_freedom(est, mu)} for mu in mus],
        "plan": plan.to_dict() if plan is not None else None,
    }
    plan_path = args.plan
    if plan_path is None and args.out not in (None, "-"):
        plan_path = str(Path(args.out).with_suffix("")) + ".plan.json"
    _emit(args.out, buf.getvalue())
    if plan_path is not None:
        atomic_write(plan_path, _dumps(report))


def cmd_plan(args):
    if args.theorem == 2:
        if args.tau is None:
            raise ValidationError("--tau is required for --theorem 2")
        plan = plan_separation(args.m, args.tau, args.d, args.delta, args.constant)
        out = {"theorem": 2, "m": args.m, "tau": args.tau, "d": args.d, **plan.to_dict()}
    else:
        if args.fit == "poly":
            if args.c1 is None or args.c2 is None:
                raise ValidationError("--c1 and --c2 are required for a polynomial fit")
            fit = DecayFit.polynomial(args.c1, args.c2)
        else:
            if args.c3 is None or args.c4 is None:
                raise ValidationError("--c3 and --c4 are required for a sub-exponential fit")
            fit = DecayFit.subexponential(args.c3, args.c4, args.d)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            plan = plan_realizable(args.m, fit, args.delta, args.constant)
        out = {"theorem": 1, "m": args.m, "fit": {"kind": fit.kind, "params": fit.params}, **plan.to_dict()}
    _emit(args.out, _dumps(out))


def _experiment(args, task):
    if args.config is not None:
        d = _load_json(args.config, "config")
        if not isinstance(d, dict):
            raise ValidationError("/: config must be a JSON object")
        d.setdefault("task", task)
    else:
        d = {"task": task}
    if args.seed_given:
        d["seed"] = args.seed
    cfg = ExperimentConfig.from_dict(d)
    if cfg.task != task and not (task == "sweep" and cfg.task == "compare"):
        raise ValidationError(f"/task: config is for {cfg.task!r}, not {task!r}")
    exp = run(cfg, threads=args.threads)
    text = rows_to_csv(exp.rows, timing=args.timing)
    out = args.out
    _emit(out, text)
    if out not in (None, "-"):
        stem = str(Path(out).with_suffix(""))
        atomic_write(args.manifest or stem + ".manifest.json", to_json(exp.manifest) + "\n")
        atomic_write(args.summary or stem + ".summary.csv", summary_to_csv(summarize(exp.results)))
    else:
        if args.manifest:
            atomic_write(args.manifest, to_json(exp.manifest) + "\n")
        if args.summary:
            atomic_write(args.summary, summary_to_csv(summarize(exp.results)))


def cmd_sweep(args):
    _experiment(args, "sweep")


def cmd_curve(args):
    _experiment(args, "curve")


# -- parser --------------------------------------------------------------------


class _SeedAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.seed_given = True


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, action=_SeedAction, help="base random seed (default 0)")
    g.add_argument("--out", default=None, help="primary output path; '-' or omitted writes to stdout")
    g.add_argument("--config", default=None, help="JSON experiment configuration (sweep, curve)")
    g.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker processes for experiment runs (default: CPU count)")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="rfsvm", description="Random-feature SVM toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="SUBCOMMAND", required=True)

    def add(name, fn, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        p.set_defaults(func=fn, seed_given=False)
        return p

    p = add("gen-data", cmd_gen_data, "Generate the circle/annulus dataset as CSV.")
    p.add_argument("--dim", type=int, default=2, help="ambient dimension (default 2)")
    p.add_argument("--m", type=int, required=True, help="number of points")
    p.add_argument("--flip-prob", type=float, default=0.1, help="label flip probability (default 0.1)")

    p = add("select", cmd_select, "Leverage-score feature selection; writes a feature-set JSON and scores CSV.")
    p.add_argument("--data", required=True, help="training dataset CSV")
    p.add_argument("--target", type=int, required=True, help="number of features to keep (N)")
    p.add_argument("--pool-size", type=int, default=None, help="pool size M (default 100 N)")
    p.add_argument("--probe-count", type=int, default=None, help="probe points L (default ceil(0.3 m))")
    p.add_argument("--ridge", type=float, default=None, help="ridge mu (default 1/m)")
    p.add_argument("--gamma", type=float, default=None, help="kernel bandwidth (default: mean pairwise distance)")
    p.add_argument("--unweighted", action="store_true", help="keep unit weights after resampling")
    p.add_argument("--scores", default=None, help="scores CSV path (default <out>.scores.csv)")

    p = add("train", cmd_train, "Train a random-feature or kernel SVM; writes a model JSON.")
    p.add_argument("--data", required=True, help="training dataset CSV")
    p.add_argument("--lambda", dest="lam", type=float, required=True, help="regularization strength")
    p.add_argument("--epochs", type=int, default=20, help="passes over the data (default 20)")
    p.add_argument("--tolerance", type=float, default=1e-6, help="early-stop objective change (default 1e-6)")
    p.add_argument("--solver", choices=SOLVERS, default="pegasos", help="optimizer (default pegasos)")
    p.add_argument("--features", default=None, help="feature-set JSON (for example from 'select')")
    p.add_argument("--n-features", type=int, default=20, help="features to draw when --features is absent")
    p.add_argument("--gamma", type=float, default=None, help="kernel bandwidth (default: mean pairwise distance)")
    p.add_argument("--kernel", action="store_true", help="train the exact Gaussian-kernel SVM instead")
    p.add_argument("--loss-report", default=None, help="write training risks and objective to this JSON path")

    p = add("predict", cmd_predict, "Score a dataset with a trained model; writes CSV score,label.")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--data", required=True, help="dataset CSV")

    p = add("evaluate", cmd_evaluate, "Risks of a trained model on a dataset, as JSON.")
    p.add_argument("--model", required=True, help="model JSON")
    p.add_argument("--data", required=True, help="dataset CSV")

    p = add("spectrum", cmd_spectrum, "Gram spectrum, decay fit and feature plan for a dataset.")
    p.add_argument("--data", required=True, help="dataset CSV")
    p.add_argument("--gamma", type=float, default=None, help="kernel bandwidth (default: mean pairwise distance)")
    p.add_argument("--mu-grid", type=_float_list, default=None, help="comma-separated ridge values for d(mu)")
    p.add_argument("--fit", choices=("poly", "subexp"), default="subexp", help="decay model (default subexp)")
    p.add_argument("--delta", type=float, default=0.1, help="failure probability (default 0.1)")
    p.add_argument("--plan", default=None, help="plan JSON path (default <out>.plan.json)")

    p = add("plan", cmd_plan, "Parameter prescription from a decay fit (1) or class separation (2).")
    p.add_argument("--theorem", type=int, choices=(1, 2), required=True, help="1: decay fit, 2: separation")
    p.add_argument("--m", type=int, required=True, help="sample size")
    p.add_argument("--delta", type=float, default=0.1, help="failure probability (default 0.1)")
    p.add_argument("--constant", type=float, default=1.0, help="multiplier on the feature count (default 1)")
    p.add_argument("--tau", type=float, default=None, help="class separation (theorem 2)")
    p.add_argument("--d", type=int, default=2, help="data dimension (default 2)")
    p.add_argument("--fit", choices=("poly", "subexp"), default="poly", help="decay model for theorem 1")
    p.add_argument("--c1", type=float, default=None, help="polynomial scale")
    p.add_argument("--c2", type=float, default=None, help="polynomial exponent")
    p.add_argument("--c3", type=float, default=None, help="sub-exponential scale")
    p.add_argument("--c4", type=float, default=None, help="sub-exponential rate")

    for name, fn, text in (("sweep", cmd_sweep, "Accuracy over the lambda grid (CSV, manifest, summary)."),
                           ("curve", cmd_curve, "Excess risk over sample sizes (CSV, manifest, summary).")):
        p = add(name, fn, text)
        p.add_argument("--manifest", default=None, help="manifest JSON path (default <out>.manifest.json)")
        p.add_argument("--summary", default=None, help="summary CSV path (default <out>.summary.csv)")
        p.add_argument("--timing", action="store_true", help="record wall_ms (output is then not reproducible)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        parser.error("--threads must be >= 1")
    try:
        args.func(args)
    except (NumericError, FloatingPointError) as exc:
        print(f"rfsvm: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValidationError as exc:
        print(f"rfsvm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"rfsvm: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
