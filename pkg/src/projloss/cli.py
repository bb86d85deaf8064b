"""Command-line interface: ``projloss <command> ...``.

Commands: project, gradcheck, train, eval, experiment, verify.  Exit codes
are 0 on success, 1 when a check fails and 2 for usage or I/O errors.
``PROJLOSS_THREADS`` caps the worker threads used by ``experiment``.

Reports are JSON with sorted keys and contain no wall-clock data unless
``--timing`` is given, so identical seeds give byte-identical files.
"""

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources

import jsonschema
import numpy as np

from .datasets import BUILTIN
from .dataio import load_dataset
from .encoding import absolute, hamming_multilabel, zero_one
from .errors import ProjLossError
from .geometry import Geometry
from .losses import fy_loss
from .model import (MARGINAL_SET, SELECTION_METRIC_NAMES, TrainConfig, evaluate_model,
                    fit_select, load_pipeline, save_pipeline, split)
from .polytopes import Kind, Polytope, lmo
from .projections import project
from .verify import finite_diff_grad, run_calibration

REPORT_VERSION = 1
EXIT_OK, EXIT_CHECK_FAILED, EXIT_USAGE = 0, 1, 2
THREADS_ENV = "PROJLOSS_THREADS"

METRIC_DEFINITIONS = {
    "hamming": "100 x mean fraction of items whose predicted position is wrong",
    "mae": "mean absolute difference between predicted and true levels",
    "accuracy": "100 x mean per-label agreement (Hamming accuracy)",
    "f1": "example-based F1 x 100; empty vs empty scores 100, one empty scores 0",
    "error": "100 x fraction of misclassified samples",
    "selection": "lambda minimizes the validation metric (multilabel: 100 - F1); "
                 "ties go to the smaller lambda",
}


class UsageError(Exception):
    pass


def _report_schema():
    text = resources.files("projloss").joinpath("schemas/report.schema.json").read_text()
    return json.loads(text)


def _emit(report, path=None):
    """Validate ``report`` against the shipped schema and write it."""
    report = {"format_version": REPORT_VERSION, **report}
    jsonschema.validate(report, _report_schema())
    text = json.dumps(report, sort_keys=True, indent=2) + "\n"
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _floats(text):
    try:
        return np.array([float(v) for v in text.replace(",", " ").split()])
    except ValueError:
        raise UsageError(f"cannot parse numbers from {text!r}") from None


def _fmt(values):
    return " ".join(f"{v:g}" for v in np.ravel(values))


def _set_from_args(name, n, lower=None, upper=None, weights=None):
    kind = Kind(name.lower().replace("-", "_"))
    if weights is not None:
        weights = _floats(weights)
    return Polytope.from_name(kind.value, n, lower, upper, weights)


def _dim_to_k(name, dim):
    kind = Kind(name.lower().replace("-", "_"))
    if kind in (Kind.BIRKHOFF, Kind.ROW_STOCHASTIC):
        k = int(round(np.sqrt(dim)))
        if k * k != dim:
            raise UsageError(f"{kind.value} needs a square matrix, got {dim} entries")
        return k
    if kind is Kind.ORDER_SIMPLEX:
        return dim + 1
    return dim


def cmd_project(args):
    theta = _floats(args.input)
    k = args.k or _dim_to_k(args.set, theta.size)
    spec = _set_from_args(args.set, k, args.lower, args.upper, args.weights)
    res = project(spec, args.geometry, theta, tol=args.tol, strict=False)
    print(_fmt(res.mu))
    print(f"iterations {res.iterations} residual {res.residual:.3g}")
    return EXIT_OK if res.residual <= args.tol else EXIT_CHECK_FAILED


def gradcheck(spec, geometry, seed, points=20, tol=None, corrupt=False, h=None):
    """Largest relative gap between analytic and central-difference gradients."""
    rng = np.random.default_rng(seed)
    iterative = spec.kind is Kind.BIRKHOFF
    tol = tol if tol is not None else (1e-3 if iterative else 1e-5)
    h = h if h is not None else (1e-5 if iterative else 1e-6)
    kw = {"tol": 1e-12, "max_iter": 10**5} if iterative else {}
    worst = 0.0
    for _ in range(points):
        theta = rng.normal(size=spec.ambient_dim)
        if spec.kind is Kind.FULL_SPACE:
            target = rng.normal(size=spec.ambient_dim)
        else:
            target = lmo(spec, rng.normal(size=spec.ambient_dim))
        grad = fy_loss(spec, geometry, theta, target, **kw).gradient
        if corrupt:
            grad = 1.1 * grad + 1e-3
        fd = finite_diff_grad(
            lambda t: fy_loss(spec, geometry, t, target, check=False, **kw).value,
            theta, h)
        scale = max(np.max(np.abs(fd)), np.max(np.abs(grad)), 1e-8)
        worst = max(worst, float(np.max(np.abs(grad - fd)) / scale))
    return worst, tol


def cmd_gradcheck(args):
    spec = _set_from_args(args.set, args.k, args.lower, args.upper, args.weights)
    worst, tol = gradcheck(spec, args.geometry, args.seed, args.points, args.tol,
                           args.corrupt_gradient)
    passed = worst <= tol
    print(f"max relative error {worst:.3g} (tolerance {tol:g}): "
          f"{'PASS' if passed else 'FAIL'}")
    if args.report:
        _emit({"command": "gradcheck", "set": spec.describe(),
               "geometry": Geometry.parse(args.geometry).value, "seed": args.seed,
               "points": args.points, "max_rel_error": worst, "tolerance": tol,
               "passed": passed}, args.report)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _load(data, task, n_labels):
    if data.startswith("builtin:"):
        name = data.split(":", 1)[1]
        if name not in BUILTIN:
            raise UsageError(f"unknown built-in dataset {name!r}; "
                             f"choose from {sorted(BUILTIN)}")
        ds = BUILTIN[name]()
        if ds.task != task:
            raise UsageError(f"built-in dataset {name!r} is a {ds.task} task")
        return ds
    return load_dataset(data, task, n_labels)


def _config(task, projection, decoding, geometry, loss, grid, n_labels, baseline=None,
            budget=None):
    return TrainConfig(task=task, projection=projection, decoding=decoding,
                       geometry=geometry, loss=loss, lambda_grid=grid,
                       n_labels=n_labels, baseline=baseline,
                       budget=tuple(budget) if budget else None)


def _set_name(name, task, baseline=None):
    if baseline:
        return baseline
    return name or MARGINAL_SET[task]


def run_one(dataset, cfg, seed):
    """Split, select ``lam``, refit and score on the test part."""
    train, val, test = split(dataset, seed)
    result = fit_select(train, val, cfg)
    metrics = evaluate_model(result.model, test.features, test.labels)
    return result, metrics


def cmd_train(args):
    start = time.perf_counter()
    ds = _load(args.data, args.task, args.n_labels)
    grid = args.lambda_grid or list(TrainConfig().lambda_grid)
    cfg = _config(args.task, args.projection, args.decoding, args.geometry, args.loss,
                  grid, args.n_labels or ds.n_labels, args.baseline, args.budget)
    result, metrics = run_one(ds, cfg, args.seed)
    if args.model_out:
        save_pipeline(args.model_out, result.model, {"seed": args.seed,
                                                     "dataset": args.data})
    task = "ordinal" if args.baseline else args.task
    report = {
        "command": "train", "dataset": args.data, "task": task,
        "projection": _set_name(args.projection, task, args.baseline),
        "decoding": _set_name(args.decoding, task, args.baseline),
        "geometry": Geometry.parse(args.geometry).value, "seed": args.seed,
        "lambda": result.lam, "lambda_grid": sorted(cfg.lambda_grid),
        "selection_metric": result.metric_name, "val_metric": result.val_metric,
        "val_scores": result.val_scores, "test_metrics": metrics,
        "definitions": METRIC_DEFINITIONS,
    }
    if args.timing:
        report["timing"] = {"seconds": time.perf_counter() - start}
    print(_emit(report, args.report), end="")
    return EXIT_OK


def cmd_eval(args):
    model, header = load_pipeline(args.model)
    est = model[-1]
    ds = _load(args.data, header["task"], args.n_labels or est.n_labels_)
    metrics = evaluate_model(model, ds.features, ds.labels)
    report = {"command": "eval", "dataset": args.data, "task": header["task"],
              "metrics": metrics, "definitions": METRIC_DEFINITIONS}
    print(_emit(report, args.report), end="")
    return EXIT_OK


# Small built-in experiment grids: (projection, decoding, geometry,
# baseline) per column.
PRESETS = {
    "iris": {
        "task": "ranking", "datasets": ["builtin:iris"], "n_labels": 3,
        "configs": [
            {"projection": "full", "decoding": "cube"},
            {"projection": "cube", "decoding": "cube"},
            {"projection": "full", "decoding": "birkhoff"},
            {"projection": "birkhoff", "decoding": "birkhoff"},
            {"projection": "birkhoff", "decoding": "birkhoff", "geometry": "kl"},
        ],
    },
    "ordinal": {
        "task": "ordinal", "datasets": ["builtin:synthetic_ordinal"], "n_labels": 5,
        "configs": [
            {"baseline": "rounding_ridge"},
            {"projection": "full", "decoding": "order_simplex"},
            {"projection": "cube", "decoding": "order_simplex"},
            {"projection": "order_simplex", "decoding": "order_simplex"},
            {"projection": "order_simplex", "decoding": "order_simplex",
             "geometry": "kl"},
        ],
    },
    "multilabel": {
        "task": "multilabel", "datasets": ["builtin:synthetic_multilabel"],
        "n_labels": 5,
        "configs": [
            {"projection": "full", "decoding": "cube"},
            {"projection": "cube", "decoding": "cube"},
            {"projection": "knapsack", "decoding": "knapsack"},
            {"projection": "cube", "decoding": "cube", "geometry": "kl"},
        ],
    },
}


def _threads():
    value = os.environ.get(THREADS_ENV)
    if value is None:
        return os.cpu_count() or 1
    try:
        n = int(value)
    except ValueError:
        raise UsageError(f"{THREADS_ENV} must be a positive integer") from None
    if n < 1:
        raise UsageError(f"{THREADS_ENV} must be a positive integer")
    return n


def run_experiment(spec, seeds=None):
    """Rows of one experiment grid, in grid order whatever the thread count."""
    task = spec["task"]
    seeds = seeds if seeds is not None else spec.get("seeds", [0])
    grid = spec.get("lambda_grid") or list(TrainConfig().lambda_grid)
    datasets, configs = spec.get("datasets", []), spec.get("configs", [])
    if not datasets or not configs or not seeds:
        raise UsageError("experiment grid is empty (datasets, configs and seeds "
                         "must each be nonempty)")
    loaded = {d: _load(d, task, spec.get("n_labels")) for d in datasets}
    jobs = [(d, c, s) for d in datasets for c in configs for s in seeds]

    def job(item):
        d, c, seed = item
        baseline = c.get("baseline")
        cfg = _config(task, c.get("projection"), c.get("decoding"),
                      c.get("geometry", "euclidean"), c.get("loss"), grid,
                      spec.get("n_labels") or loaded[d].n_labels, baseline,
                      c.get("budget"))
        result, metrics = run_one(loaded[d], cfg, seed)
        row_task = "ordinal" if baseline else task
        name = SELECTION_METRIC_NAMES[row_task]
        metric = "f1" if name == "100-f1" else name
        return {"dataset": d, "projection": _set_name(c.get("projection"), task, baseline),
                "decoding": _set_name(c.get("decoding"), task, baseline),
                "geometry": c.get("geometry", "euclidean"), "metric": metric,
                "value": metrics[metric], "seed": seed, "lambda": result.lam}

    with ThreadPoolExecutor(max_workers=min(_threads(), len(jobs))) as pool:
        return list(pool.map(job, jobs))


def format_table(rows):
    lines = [f"{'dataset':<28} {'projection':<16} {'decoding':<16} {'geometry':<10} "
             f"{'metric':<8} {'value':>8} {'seed':>5}"]
    for r in rows:
        lines.append(f"{r['dataset']:<28} {r['projection']:<16} {r['decoding']:<16} "
                     f"{r['geometry']:<10} {r['metric']:<8} {r['value']:>8.2f} "
                     f"{r['seed']:>5}")
    return "\n".join(lines)


def cmd_experiment(args):
    start = time.perf_counter()
    if args.config:
        with open(args.config) as fh:
            spec = json.load(fh)
        name = spec.get("name", os.path.basename(args.config))
    elif args.preset:
        spec, name = PRESETS[args.preset], args.preset
    else:
        raise UsageError("give --preset or --config")
    rows = run_experiment(spec, args.seeds)
    print(format_table(rows))
    report = {"command": "experiment", "name": name, "rows": rows}
    if args.timing:
        report["timing"] = {"seconds": time.perf_counter() - start}
    text = _emit(report, args.report)
    if not args.report:
        print(text, end="")
    return EXIT_OK


def calibration_suite(k=3):
    """The (set, target loss) pairs covered by ``verify``."""
    return [
        (Polytope.simplex(k), zero_one(k)),
        (Polytope.cube(k), hamming_multilabel(k)),
        (Polytope.order_simplex(k + 1), absolute(k + 1)),
    ]


def cmd_verify(args):
    results = []
    for spec, decomposition in calibration_suite(args.k):
        for geometry in ("euclidean", "kl"):
            violations, worst = run_calibration(spec, geometry, decomposition,
                                                args.trials, args.seed)
            results.append({"set": spec.describe(), "geometry": geometry,
                            "loss": decomposition.name, "violations": violations,
                            "worst_ratio": worst})
            print(f"{spec.describe():<24} {geometry:<10} {decomposition.name:<20} "
                  f"violations {violations}/{args.trials}  worst lhs/rhs {worst:.3f}")
    passed = all(r["violations"] == 0 for r in results)
    if args.report:
        _emit({"command": "verify", "trials": args.trials, "seed": args.seed,
               "results": results, "passed": passed}, args.report)
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def _add_set_args(p, require_k=False):
    p.add_argument("--set", required=True,
                   help="simplex, cube, knapsack, birkhoff, rowstochastic, "
                        "permutahedron, order_simplex or full")
    p.add_argument("--geometry", default="euclidean", choices=["euclidean", "kl"])
    p.add_argument("--k", type=int, required=require_k,
                   help="size (side length for matrix sets, levels for order_simplex)")
    p.add_argument("--lower", type=int, help="knapsack lower budget")
    p.add_argument("--upper", type=int, help="knapsack upper budget")
    p.add_argument("--weights", help="permutahedron weights, descending")


def _add_model_args(p):
    p.add_argument("--task", required=True,
                   choices=["multiclass", "multilabel", "ranking", "ordinal"])
    p.add_argument("--data", required=True,
                   help="dataset file, or builtin:NAME with NAME in "
                        + ", ".join(sorted(BUILTIN)))
    p.add_argument("--n-labels", type=int)
    p.add_argument("--projection", help="projection set; 'full' is the squared loss")
    p.add_argument("--decoding", help="decoding set")
    p.add_argument("--geometry", default="euclidean", choices=["euclidean", "kl"])
    p.add_argument("--loss", help="target loss for calibrated decoding")
    p.add_argument("--baseline", choices=["rounding_ridge"])
    p.add_argument("--budget", type=int, nargs=2, metavar=("LOWER", "UPPER"))
    p.add_argument("--lambda-grid", type=float, nargs="+")
    p.add_argument("--seed", type=int, default=0)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="projloss",
        description="Projection-based structured prediction losses.",
        epilog="Multilabel F1: both-empty scores 100, exactly one empty scores 0. "
               "Exit codes: 0 ok, 1 check failed, 2 usage or I/O error.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("project", help="project a vector or matrix onto a set")
    _add_set_args(p)
    p.add_argument("--input", required=True, help="numbers, space or comma separated; "
                   "matrices row-major")
    p.add_argument("--tol", type=float, default=1e-6)
    p.set_defaults(func=cmd_project)

    p = sub.add_parser("gradcheck", help="compare loss gradients with finite differences")
    _add_set_args(p)
    p.set_defaults(k=3)
    p.add_argument("--task", help="accepted for symmetry with train; unused")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--points", type=int, default=20)
    p.add_argument("--tol", type=float, help="default 1e-5, or 1e-3 for birkhoff")
    p.add_argument("--corrupt-gradient", action="store_true",
                   help="perturb the analytic gradient (negative control)")
    p.add_argument("--report")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train", help="select lambda, refit and report test metrics")
    _add_model_args(p)
    p.add_argument("--model-out")
    p.add_argument("--report")
    p.add_argument("--timing", action="store_true", help="add wall-clock time")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a saved model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n-labels", type=int)
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("experiment", help="run a grid of configurations")
    p.add_argument("--preset", choices=sorted(PRESETS))
    p.add_argument("--config", help="JSON grid: task, datasets, configs, seeds, ...")
    p.add_argument("--seeds", type=int, nargs="+")
    p.add_argument("--report")
    p.add_argument("--timing", action="store_true")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("verify", help="Monte Carlo check of the calibration bound")
    p.add_argument("--trials", type=int, default=10**4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--report")
    p.set_defaults(func=cmd_verify)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, OSError, ProjLossError, ValueError) as exc:
        print(f"projloss {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
