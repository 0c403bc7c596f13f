"""Command-line interface.

Exit status: 0 on success, 2 for unreadable input or bad settings, 3 when
an imputation chain fails.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import pandas as pd

from .. import rand
from ..clustering import METHODS, ClustererSpec, fit_clusterer
from ..exceptions import ChainFailure, InvalidParameterError, MIClusterError, ParseError
from ..impute import PredictorMatrix
from ..mechanisms import MechanismSpec, ampute
from ..pooling import choose_k, instability_single, pool
from . import io
from .experiment import ENGINES, impute, load_config, replace_spec, run_experiment, summarize_results, write_table
from .models import MODELS, generate_model, model_spec

logger = logging.getLogger("micluster")

EXIT_OK, EXIT_CONFIG, EXIT_CHAIN = 0, 2, 3


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--na-token", default="NA", help="marker for missing cells (default NA)")
    p.add_argument("--threads", type=int, default=1, help="parallel workers for experiment replicates")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _predictors(path):
    return None if path is None else PredictorMatrix.from_csv(path)


def cmd_simulate(args) -> int:
    spec = model_spec(args.model)
    data = generate_model(spec, rand.derive(args.seed, 0))
    if args.tau > 0:
        data = ampute(data, MechanismSpec.named(args.mechanism, args.tau, args.driver_col), rand.derive(args.seed, 1))
    io.save_csv(data, args.out, args.na_token)
    if args.labels_out:
        io.save_labels(data.ref_labels, args.labels_out, "class")
    print(f"wrote {data.n} x {data.p} to {args.out} ({data.missing_fraction():.3f} missing)")
    return EXIT_OK


def cmd_impute(args) -> int:
    data = io.load_csv(args.input, args.na_token)
    res = impute(args.engine, data, args.k, args.m, rand.derive(args.seed, 0), l=args.l, burn_in=args.burn_in,
                 thin=args.thin, pred=_predictors(args.predictors))
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = len(str(res.m))
    for i, Z in enumerate(res.completed, start=1):
        io.save_matrix(Z, out / f"imputed_{i:0{width}d}.csv", data.columns)
    diag = res.diagnostics()
    if not diag.empty:
        write_table(diag, out / "diagnostics.csv")
    print(f"wrote {res.m} imputed datasets to {out}")
    return EXIT_OK


def _spec(args, k=None) -> ClustererSpec:
    std = None if args.standardize is None else args.standardize == "yes"
    return ClustererSpec(args.method, args.k if k is None else k, args.constraint, std)


def cmd_cluster(args) -> int:
    data = io.load_csv(args.input, args.na_token)
    if not data.is_complete:
        raise InvalidParameterError(f"{args.input} has missing cells; impute it first")
    fitted = fit_clusterer(data.values, _spec(args), rand.derive(args.seed, 0))
    io.save_labels(fitted.partition.labels, args.out)
    print(f"wrote {data.n} labels to {args.out}")
    return EXIT_OK


def cmd_pool(args) -> int:
    parts = [io.load_labels(f) for f in args.labels]
    inst = None
    if args.data:
        if len(args.data) != len(parts):
            raise InvalidParameterError("give one dataset per label file")
        spec = _spec(args)
        inst = []
        for path, sub in zip(args.data, rand.spawn(rand.derive(args.seed, 1), len(parts))):
            Z = io.load_csv(path, args.na_token)
            inst.append(instability_single(Z.values, spec, args.rounds, sub))
    res = pool(parts, args.k, rand.derive(args.seed, 0), inst)
    io.save_labels(res.partition.labels, args.out)
    if res.total_instability is not None:
        print(f"total_instability = {io.format_number(res.total_instability)}")
    print(f"wrote consensus of {len(parts)} partitions to {args.out}")
    return EXIT_OK


def cmd_choose_k(args) -> int:
    data = io.load_csv(args.input, args.na_token)
    pred = _predictors(args.predictors)

    def run(d, K, sub):
        return impute(args.engine, d, K, args.m, sub, l=args.l, burn_in=args.burn_in, thin=args.thin, pred=pred)

    res = choose_k(data.without_labels(), run, _spec(args, 2), args.k_max, rand.derive(args.seed, 0), b=args.rounds)
    table = pd.DataFrame([{"clusterer": args.method, "engine": args.engine,
                           **{f"K{K}": v for K, v in res.instability.items()}}])
    write_table(table, args.out)
    print(f"argmin K = {res.k}; table written to {args.out}")
    return EXIT_OK


def cmd_experiment(args) -> int:
    if not args.config:
        raise ParseError("experiment needs --config")
    spec, cfg = load_config(args.config)
    if args.threads != 1:
        spec = replace_spec(spec, n_jobs=args.threads)
    results = args.results or cfg.get("results", "results.csv")
    summary = args.summary or cfg.get("summary", "summary.csv")
    df = run_experiment(spec)
    write_table(df, results)
    write_table(summarize_results(df), summary)
    print(f"{int((df['status'] == 'ok').sum())}/{len(df)} replicates ok; results in {results}, summary in {summary}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="micluster", description="Multiple imputation for cluster analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a model dataset and mask it")
    p.add_argument("--model", default="I", choices=list(MODELS))
    p.add_argument("--mechanism", default="mcar", help="mcar, mar1, mar2 or mar (with --driver-col)")
    p.add_argument("--tau", type=float, default=0.25)
    p.add_argument("--driver-col", type=int)
    p.add_argument("--out", required=True)
    p.add_argument("--labels-out")
    p.set_defaults(func=cmd_simulate)

    def add_chain(p):
        p.add_argument("--engine", default="fcs_homo", choices=[e for e in ENGINES if e != "external"])
        p.add_argument("--m", type=int, default=20)
        p.add_argument("--l", type=int, help="FCS sweeps per chain")
        p.add_argument("--burn-in", type=int)
        p.add_argument("--thin", type=int)
        p.add_argument("--predictors", help="0/1 predictor matrix CSV (FCS engines)")

    def add_clusterer(p, k_required=True):
        p.add_argument("--method", default="kmeans", choices=METHODS)
        if k_required:
            p.add_argument("--k", type=int, required=True)
        p.add_argument("--constraint", default="homo", choices=("homo", "hetero"))
        p.add_argument("--standardize", choices=("yes", "no"), help="default: yes except for mixture")

    p = sub.add_parser("impute", parents=[common], help="impute a CSV M times")
    p.add_argument("--input", required=True)
    p.add_argument("--k", type=int, default=3, help="latent classes")
    add_chain(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_impute)

    p = sub.add_parser("cluster", parents=[common], help="cluster a complete CSV")
    p.add_argument("--input", required=True)
    add_clusterer(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("pool", parents=[common], help="consensus of label files and total instability")
    p.add_argument("--labels", nargs="+", required=True)
    p.add_argument("--data", nargs="+", help="completed datasets, one per label file, for the instability")
    add_clusterer(p)
    p.add_argument("--rounds", type=int, default=20, help="bootstrap pairs per dataset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pool)

    p = sub.add_parser("choose-k", parents=[common], help="total instability over K = 2..k-max")
    p.add_argument("--input", required=True)
    add_chain(p)
    add_clusterer(p, k_required=False)
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--rounds", type=int, default=20)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_choose_k)

    p = sub.add_parser("experiment", parents=[common], help="run a simulation study from a config file")
    p.add_argument("--results")
    p.add_argument("--summary")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except ChainFailure as exc:
        print(f"error: imputation chain failed: {exc}", file=sys.stderr)
        return EXIT_CHAIN
    except (ParseError, InvalidParameterError, MIClusterError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
