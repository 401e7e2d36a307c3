"""Command-line interface: ``apqr {simulate,fit,predict,select-k,bench}``.

Exit codes
----------
0 success; 1 other library error; 2 usage; 3 parse or domain error;
4 shape error; 5 convergence error; 6 capacity error; 7 numeric or
singularity error; 8 model schema version mismatch; 9 missing input file.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ApqrError, MissingSourceError, ShapeError
from .io import (
    dump_json,
    load_curves,
    load_matrix,
    load_model,
    load_vector,
    save_model,
    save_table,
    save_vector,
)
from .loss import validate_tau
from .model import fit_model, mae, mean_check_loss
from .schedule import default_schedule
from .select import select_k
from .sim import SimSpec, generate, run_study, summarize, synthetic_source_curves

STUDY_COLUMNS = ["rep", "method", "K", "MAE", "seed", "status"]


def _k_grid(text):
    ks = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-")
            ks.extend(range(int(a), int(b) + 1))
        elif part:
            ks.append(int(part))
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError(f"invalid K grid {text!r}")
    return sorted(set(ks))


def _tau_arg(text):
    try:
        return validate_tau(float(text))
    except (ValueError, ApqrError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _add_schedule(p):
    g = p.add_argument_group("smoothing schedule")
    g.add_argument("--nu-ratio", type=float, default=0.2, help="width ratio between stages")
    g.add_argument("--max-outer", type=int, default=40, help="stage cap")
    g.add_argument("--max-inner", type=int, default=500, help="iterations per block update")
    g.add_argument("--outer-tol", type=float, default=1e-6)
    g.add_argument("--inner-tol", type=float, default=1e-8)


def _schedule(args, y):
    return default_schedule(y, ratio=args.nu_ratio, stages=args.max_outer,
                            outer_tol=args.outer_tol, inner_tol=args.inner_tol,
                            max_inner=args.max_inner)


def _check_paths(*paths):
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise MissingSourceError(f"no such file: {p}")


def _load_data(args, need_y=True):
    _check_paths(args.curves, args.scalars, getattr(args, "responses", None))
    Z = load_curves(args.curves)
    X = None
    if args.scalars:
        _, X = load_matrix(args.scalars)
        if X.shape[0] != Z.n:
            raise ShapeError(f"{args.scalars} has {X.shape[0]} rows, {args.curves} has {Z.n}")
    y = None
    if need_y:
        y = load_vector(args.responses)
        if y.shape[0] != Z.n:
            raise ShapeError(f"{args.responses} has {y.shape[0]} rows, {args.curves} has {Z.n}")
    return Z, X, y


def _sim_spec(args):
    kind = "cosine" if args.sim == "cosine" else "curve_driven"
    source = None
    if kind == "curve_driven":
        if args.source_curves:
            _check_paths(args.source_curves)
            source = load_curves(args.source_curves)
        elif args.synthetic_source:
            source = synthetic_source_curves(seed=args.seed)
        else:
            raise MissingSourceError(
                "the curve-driven design needs source curves: pass --source-curves FILE "
                "(grid header, one curve per row) or --synthetic-source")
    n = args.n if args.n is not None else (300 if kind == "cosine" else source.n)
    return SimSpec(kind=kind, n=n, d=args.d, error=args.error, seed=args.seed,
                   source=source, pattern=args.pattern)


def cmd_simulate(args):
    spec = _sim_spec(args)
    rows = run_study(spec, args.methods, Ks=args.k_grid, reps=args.reps, seed=args.seed,
                     tau=args.tau, folds=args.folds, n_jobs=args.jobs)
    for r in rows:
        r["K"] = "" if r["K"] is None else r["K"]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_table(out / "study.csv", rows, STUDY_COLUMNS)
    summary = {"spec": {"kind": spec.kind, "n": spec.n, "d": spec.d, "error": spec.error,
                        "pattern": spec.pattern if spec.kind == "curve_driven" else None,
                        "reps": args.reps, "seed": args.seed, "tau": args.tau},
               "methods": summarize(rows)}
    dump_json(out / "summary.json", summary)
    print(f"wrote {out / 'study.csv'} and {out / 'summary.json'}")
    return 0


def cmd_fit(args):
    Z, X, y = _load_data(args)
    schedule = _schedule(args, y)
    chosen = None
    if args.k is None:
        report = select_k(Z, X, y, args.tau, args.k_grid, criterion="cv", method=args.method,
                          folds=args.folds, seed=args.seed, schedule=schedule)
        chosen = report.chosen_K
    K = args.k if args.k is not None else chosen
    model = fit_model(Z, X, y, args.tau, K, method=args.method, seed=args.seed,
                      schedule=schedule)
    save_model(args.model, model)
    report = {"method": args.method, "tau": args.tau, "K": K, "chosen_K": chosen,
              "n": Z.n, "d": Z.d, "in_sample_MAE": mae(y, model.fitted),
              "in_sample_check_loss": mean_check_loss(y, model.fitted, args.tau)}
    trace = model.trace
    if trace is not None:
        report["trace_length"] = len(trace)
        report["stages"] = len(trace.states)
        report["final_objective"] = trace.states[-1].objective
        report["final_score_norm"] = _final_score_norm(trace, Z, X, y, args.tau)
    if args.out:
        dump_json(args.out, report)
    print(f"wrote model to {args.model} (K={K}, in-sample MAE {report['in_sample_MAE']:.6g})")
    return 0


def _final_score_norm(trace, Z, X, y, tau):
    from .basis import standardize
    from .pqr import score

    state = trace.states[-1]
    return float(np.max(np.abs(score(state, standardize(Z), X, y, tau, state.nu))))


def cmd_predict(args):
    _check_paths(args.model)
    model = load_model(args.model)
    Z, X, _ = _load_data(args, need_y=False)
    pred = model.predict(X, Z)
    save_vector(args.out, pred, "prediction")
    print(f"wrote {pred.size} predictions to {args.out}")
    return 0


def cmd_select_k(args):
    Z, X, y = _load_data(args)
    report = select_k(Z, X, y, args.tau, args.k_grid, criterion=args.criterion,
                      method=args.method, folds=args.folds, seed=args.seed,
                      schedule=_schedule(args, y))
    doc = report.to_dict()
    doc["scores"] = [None if not math.isfinite(s) else s for s in report.scores]
    if args.out:
        out = Path(args.out)
        if out.suffix == ".csv":
            rows = [{"K": k, "score": s} for k, s in zip(report.candidate_Ks, report.scores)]
            save_table(out, rows, ["K", "score"])
        else:
            dump_json(out, doc)
    print(f"chosen K={report.chosen_K} by {args.criterion}")
    return 0


def cmd_bench(args):
    """Fit each method once on a Simulation I replicate and time it."""
    rep = generate(SimSpec(n=args.n or 300, d=args.d, error=args.error, seed=args.seed))
    Ztr, ytr = rep.train
    Zte, yte = rep.test
    rows = []
    for method in args.bench_methods:
        for K in args.k_grid:
            t0 = time.perf_counter()
            model = fit_model(Ztr, None, ytr, args.tau, K, method=method, seed=args.seed)
            dt = time.perf_counter() - t0
            rows.append({"method": method, "K": K, "seconds": dt,
                         "MAE": mae(yte, model.predict(None, Zte))})
            print(f"{method:5s} K={K:<3d} {dt:8.3f}s  MAE {rows[-1]['MAE']:.4f}")
    if args.out:
        save_table(args.out, rows, ["method", "K", "seconds", "MAE"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="apqr", description=__doc__.split("\n")[0],
                                     epilog="exit codes: 0 ok, 1 error, 2 usage, 3 parse, "
                                     "4 shape, 5 convergence, 6 capacity, 7 numeric, "
                                     "8 version, 9 missing file")
    parser.add_argument("--version", action="version", version=f"apqr {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data=True, responses=True):
        p.add_argument("--tau", type=_tau_arg, default=0.5, help="quantile level in (0, 1)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--folds", type=int, default=10)
        if data:
            p.add_argument("--curves", required=True, help="CSV: grid header, one curve per row")
            p.add_argument("--scalars", help="CSV of scalar covariates with a header row")
            if responses:
                p.add_argument("--responses", required=True, help="CSV with one column")

    p = sub.add_parser("simulate", help="run a simulation study")
    common(p, data=False)
    p.add_argument("--sim", choices=["cosine", "curve-driven"], default="cosine")
    p.add_argument("--error", choices=["gaussian", "cauchy", "none"], default="gaussian")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--d", type=int, default=120)
    p.add_argument("--pattern", type=int, choices=[1, 2, 3, 4], default=1)
    p.add_argument("--source-curves", help="source curves for the curve-driven design")
    p.add_argument("--synthetic-source", action="store_true",
                   help="use seeded rank-20 synthetic source curves")
    p.add_argument("--methods", type=lambda s: s.split(","), default=["apqr:2", "fpc:5"],
                   help="comma list such as apqr:2,fpc:auto,pls:2")
    p.add_argument("--k-grid", type=_k_grid, default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--jobs", type=int, default=1, help="parallel replicate workers")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="fit a model and save it")
    common(p)
    p.add_argument("--method", choices=["apqr", "fpc", "pls"], default="apqr")
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--k-grid", type=_k_grid, default=[1, 2, 3, 4, 5, 6],
                   help="candidates for CV when --k is absent")
    p.add_argument("--model", required=True, help="output model document (JSON)")
    p.add_argument("--out", help="fit report (JSON)")
    _add_schedule(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="predict quantiles with a saved model")
    common(p, responses=False)
    p.add_argument("--model", required=True)
    p.add_argument("--out", required=True, help="predictions CSV")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("select-k", help="score candidate K by CV or BIC")
    common(p)
    p.add_argument("--method", choices=["apqr", "fpc", "pls"], default="apqr")
    p.add_argument("--k-grid", type=_k_grid, default=[1, 2, 3, 4, 5, 6])
    p.add_argument("--criterion", choices=["cv", "bic"], default="cv")
    p.add_argument("--out", help="report path (.json or .csv)")
    _add_schedule(p)
    p.set_defaults(func=cmd_select_k)

    p = sub.add_parser("bench", help="time each method on one simulated replicate")
    common(p, data=False)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--d", type=int, default=120)
    p.add_argument("--error", choices=["gaussian", "cauchy"], default="gaussian")
    p.add_argument("--bench-methods", type=lambda s: s.split(","), default=["apqr", "fpc", "pls"])
    p.add_argument("--k-grid", type=_k_grid, default=[2])
    p.add_argument("--out", help="timings CSV")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ApqrError as exc:
        print(f"apqr: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
