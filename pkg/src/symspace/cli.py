"""Command-line interface.

Every subcommand writes either CSV (first line a ``#`` comment echoing the
configuration) or sorted-key JSON with a ``config`` entry, so identical
arguments give byte-identical output.

Exit codes: 0 success, 1 usage error, 2 data error, 3 verification failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys

import numpy as np

from . import classify, descriptors, estimators, metrics, simulation, verify
from . import io as symio
from .distributions import make_rng
from .exceptions import SymspaceError
from .manifolds import manifold_from_string

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _manifold_arg(text: str):
    try:
        return manifold_from_string(text)
    except SymspaceError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def _float_list(text: str) -> list[float]:
    try:
        values = [float(t) for t in text.split(",") if t.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc
    if not values:
        raise argparse.ArgumentTypeError("list is empty")
    return values


def _config(args: argparse.Namespace) -> dict:
    out = {}
    for key, value in sorted(vars(args).items()):
        if key in ("func", "log_level", "out"):
            continue
        if hasattr(value, "name") and not isinstance(value, (str, list)):
            value = value.name
        out[key] = value
    return out


def _read_text(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    with open(path, encoding="utf-8") as fh:
        return fh.read()


def _emit(args: argparse.Namespace, text: str) -> None:
    if args.out == "-":
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with open(args.out, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _comment(args: argparse.Namespace) -> str:
    return f"# symspace {args.command} {json.dumps(_config(args), sort_keys=True)}\n"


def _emit_json(args: argparse.Namespace, payload: dict) -> None:
    _emit(args, symio.dumps({"config": _config(args), **payload}))


def _load_model_file(path: str):
    """Log-Gaussian parameters or a fitted KDE / mixture model."""
    text = _read_text(path)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SymspaceError(f"{path}: not valid JSON ({exc})") from exc
    if isinstance(data, dict) and "model" in data:
        data = data["model"]
    if isinstance(data, dict) and data.get("type") in ("kde", "mixture"):
        try:
            return estimators.load_model(json.dumps(data))
        except (KeyError, TypeError) as exc:
            raise SymspaceError(f"{path}: malformed model ({exc})") from exc
    return symio.read_params(json.dumps(data))


def _check_manifold(args, manifold):
    if args.manifold is not None and args.manifold != manifold:
        raise SymspaceError(f"--manifold {args.manifold.name} does not match the file's {manifold.name}")
    return manifold


def _points(args, manifold, path=None):
    return symio.read_points_csv(manifold, _read_text(path or args.input))


def cmd_sample(args) -> int:
    lg = symio.read_params(_read_text(args.params))
    manifold = _check_manifold(args, lg.manifold)
    if args.n < 0:
        raise UsageError("--n must be nonnegative")
    points = lg.sample(args.n, make_rng(args.seed)) if args.n else np.zeros((0,) + manifold.chart_shape)
    _emit(args, _comment(args) + symio.write_points_csv(manifold, points))
    return EXIT_OK


def cmd_density(args) -> int:
    if (args.params is None) == (args.model is None):
        raise UsageError("give exactly one of --params and --model")
    model = _load_model_file(args.params or args.model)
    manifold = _check_manifold(args, model.manifold)
    points, _ = _points(args, manifold)
    values = np.asarray(model.log_pdf(points), dtype=float).reshape(-1) if len(points) else np.zeros(0)
    if args.format == "json":
        _emit_json(args, {"log_density": values.tolist()})
        return EXIT_OK
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["index", "log_density"])
    for i, v in enumerate(values):
        writer.writerow([i, repr(float(v))])
    _emit(args, _comment(args) + buf.getvalue())
    return EXIT_OK


def cmd_kde(args) -> int:
    manifold = args.manifold
    points, _ = _points(args, manifold)
    cv = None
    if args.h is not None:
        h = args.h
    else:
        cv = estimators.bandwidth_cv(manifold, points, grid=args.h_grid, folds=args.folds, seed=args.seed,
                                     kind=args.kind)
        h = cv.selected
    model = estimators.kde_fit(manifold, points, h, args.kind)
    _emit_json(args, {"model": model.to_dict(), "cv": None if cv is None else cv.to_dict()})
    return EXIT_OK


def cmd_em(args) -> int:
    manifold = args.manifold
    points, _ = _points(args, manifold)
    coords = manifold.log(points)
    selection = None
    if args.K is not None:
        k = args.K
    else:
        sel = estimators.model_select_k(coords, args.k_max, folds=args.folds, seed=args.seed)
        k = sel.selected
        selection = {"candidates": sel.candidates.tolist(), "fold_scores": sel.fold_scores.tolist(), "selected": k}
    model = estimators.em_fit(coords, k, seed=args.seed, max_iter=args.max_iter, tol=args.tol,
                              covariance=args.covariance, manifold=manifold)
    _emit_json(args, {"model": model.to_dict(), "selection": selection})
    return EXIT_OK


def cmd_classify(args) -> int:
    data = classify.read_dataset_csv(_read_text(args.input))
    kinds = list(classify.KINDS) if args.kind == "all" else [args.kind]
    results = {}
    for kind in kinds:
        reports = []
        for r in range(args.repeats):
            seed = args.seed + r
            if args.test is not None:
                train, test = data, classify.read_dataset_csv(_read_text(args.test))
            else:
                train, test = classify.split(data, args.fraction, seed)
            model = classify.fit(kind, train, h=args.h, folds=args.folds, seed=seed)
            report = classify.evaluate(model, test).to_dict()
            report["h"] = model.bandwidth
            reports.append(report)
        results[kind] = {
            "mean_accuracy": float(np.mean([r["accuracy"] for r in reports])),
            "mean_brier": float(np.mean([r["brier"] for r in reports])),
            "runs": reports,
        }
    _emit_json(args, {"results": results})
    return EXIT_OK


def cmd_metric(args) -> int:
    if args.which == "wasserstein":
        if args.input is None or args.input2 is None or args.manifold is None:
            raise UsageError("wasserstein needs --manifold, --in and --in2")
        xs, _ = _points(args, args.manifold)
        ys, _ = _points(args, args.manifold, args.input2)
        value = metrics.wasserstein_empirical(args.manifold, xs, ys, p=args.order, cost=args.cost)
        _emit_json(args, {"value": value, "stderr": 0.0, "n": int(len(xs)), "seed": args.seed})
        return EXIT_OK
    if args.params is None or args.params2 is None:
        raise UsageError(f"{args.which} needs --params and --params2")
    p = metrics.DensityHandle.from_model(_load_model_file(args.params))
    q = metrics.DensityHandle.from_model(_load_model_file(args.params2))
    _check_manifold(args, p.manifold)
    if args.which == "lp":
        value = metrics.lp_distance_quadrature(p, q, power=args.power, space=args.space)
        _emit_json(args, {"value": value, "stderr": 0.0, "n": 0, "seed": args.seed})
        return EXIT_OK
    fn = metrics.hellinger_sq if args.which == "hellinger" else metrics.kl_divergence
    _emit_json(args, fn(p, q, n=args.n, seed=args.seed).to_dict())
    return EXIT_OK


def cmd_descriptor(args) -> int:
    cfg = descriptors.DescriptorConfig(grid=args.grid, eps=args.eps)
    mats = []
    for path in args.input:
        with open(path, "rb") as fh:
            mats.append(descriptors.covariance_descriptor(descriptors.load_pgm(fh.read()), cfg))
    text = classify.write_dataset_csv(np.array(mats), np.full(len(mats), args.label))
    if args.no_header:
        text = text.split("\n", 1)[1]
        _emit(args, text)
    else:
        _emit(args, _comment(args) + text)
    return EXIT_OK


def cmd_verify(args) -> int:
    checks = verify.run(args.manifold, cases=args.cases, seed=args.seed)
    passed = all(c.passed for c in checks)
    _emit_json(args, {"checks": [c.to_dict() for c in checks], "passed": passed})
    return EXIT_OK if passed else EXIT_VERIFY


def cmd_simulate(args) -> int:
    report = simulation.simulate(args.family, values=args.sweep, n=args.n, replicates=args.replicates,
                                 seed=args.seed, folds=args.folds, k_max=args.k_max, measure=args.measure)
    if args.format == "json":
        _emit_json(args, {"report": report.to_dict()})
    else:
        _emit(args, _comment(args) + report.to_csv())
    if args.figure:
        from .plotting import plot_simulation

        plot_simulation(report, args.figure)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="symspace", description="Log-Gaussian densities on symmetric spaces.")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, func, help_text, fmt=("json",)):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="-", help="output path ('-' for stdout)")
        p.add_argument("--format", choices=list(fmt), default=fmt[0])
        p.set_defaults(func=func)
        return p

    p = command("sample", cmd_sample, "draw points from a log-Gaussian", ("csv",))
    p.add_argument("--params", required=True, help="parameter JSON {manifold, mu, sigma}")
    p.add_argument("--manifold", type=_manifold_arg)
    p.add_argument("--n", type=int, default=100)

    p = command("density", cmd_density, "evaluate a log-density at points", ("csv", "json"))
    p.add_argument("--params", help="parameter JSON")
    p.add_argument("--model", help="model JSON written by kde or em")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--manifold", type=_manifold_arg)

    p = command("kde", cmd_kde, "fit a kernel density estimate")
    p.add_argument("--manifold", type=_manifold_arg, required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--kind", choices=list(estimators.KERNELS), default="log_gaussian")
    p.add_argument("--h", type=float)
    p.add_argument("--h-grid", type=_float_list)
    p.add_argument("--folds", type=int, default=5)

    p = command("em", cmd_em, "fit a mixture of log-Gaussians")
    p.add_argument("--manifold", type=_manifold_arg, required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--K", type=int)
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--covariance", choices=["full", "diagonal"], default="full")

    p = command("classify", cmd_classify, "train and evaluate density-based classifiers")
    p.add_argument("--in", dest="input", required=True, help="labelled dataset CSV")
    p.add_argument("--test", help="separate test dataset; otherwise --in is split")
    p.add_argument("--kind", choices=list(classify.KINDS) + ["all"], default="all")
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--h", type=float)
    p.add_argument("--folds", type=int, default=5)

    p = command("metric", cmd_metric, "distances between densities or samples")
    p.add_argument("--which", choices=["hellinger", "kl", "lp", "wasserstein"], required=True)
    p.add_argument("--params", help="first density (parameter or model JSON)")
    p.add_argument("--params2", help="second density")
    p.add_argument("--manifold", type=_manifold_arg)
    p.add_argument("--in", dest="input", help="first point set (wasserstein)")
    p.add_argument("--in2", dest="input2", help="second point set (wasserstein)")
    p.add_argument("--n", type=int, default=10_000, help="Monte Carlo sample size")
    p.add_argument("--power", type=int, default=2, choices=[1, 2])
    p.add_argument("--space", choices=["manifold", "tangent"], default="manifold")
    p.add_argument("--order", type=float, default=2.0, help="Wasserstein order p")
    p.add_argument("--cost", choices=["geodesic", "tangent"], default="geodesic")

    p = command("descriptor", cmd_descriptor, "covariance descriptors of PGM images", ("csv",))
    p.add_argument("--in", dest="input", nargs="+", required=True)
    p.add_argument("--label", type=int, default=1)
    p.add_argument("--grid", type=int, default=32)
    p.add_argument("--eps", type=float, default=1e-8)
    p.add_argument("--no-header", action="store_true", help="rows only, for appending")

    p = command("verify", cmd_verify, "check volume factors against numerical oracles")
    p.add_argument("--manifold", type=_manifold_arg, required=True)
    p.add_argument("--cases", type=int, default=100)

    p = command("simulate", cmd_simulate, "held-out likelihood study on PD(2)", ("csv", "json"))
    p.add_argument("--family", choices=list(simulation.FAMILIES), required=True)
    p.add_argument("--sweep", type=_float_list, help="generator parameters (default: the family's standard sweep)")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--replicates", type=int, default=10)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--k-max", type=int, default=3)
    p.add_argument("--measure", choices=list(simulation.MEASURES), default="lebesgue")
    p.add_argument("--figure", help="also render a PNG plot to this path")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"symspace {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SymspaceError, ValueError, OSError, KeyError) as exc:
        print(f"symspace {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
