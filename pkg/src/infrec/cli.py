"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import __version__
from .baselines import fit_netrate, fit_topiccascade
from .diagnostics import emit_embeddings, evaluate, theory_constants
from .estimation import EstimationConfig, EstimationTrace, _run, initialize
from .exceptions import DataError, NumericalError, ShapeError
from .extensions import estimate_unknown_topics, infer_topics_batch
from .io import read_cascades, read_factors, read_matrix, write_cascades, write_factors, write_json, write_matrix
from .kernels import get_kernel
from .model import FactorPair, ModelDims, infer_num_nodes
from .simulate import SyntheticConfig, generate_dataset

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("infrec")


class UsageError(Exception):
    pass


def _default_threads() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _outdir(path) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _num_nodes(args, cascades) -> int:
    p = args.p if getattr(args, "p", None) else infer_num_nodes(cascades)
    return max(int(p), 2)


def _eta(text):
    if text == "auto":
        return "auto"
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError("eta must be 'auto' or a positive number") from None
    if not v > 0:
        raise argparse.ArgumentTypeError("eta must be positive")
    return v


def _echo(config) -> dict:
    """Config for the manifest; the thread count never changes results, so it is left out."""
    d = config.to_dict()
    d.pop("threads", None)
    return d


def _truth(args):
    if getattr(args, "truth_B1", None) is None and getattr(args, "truth_B2", None) is None:
        return None
    if not (args.truth_B1 and args.truth_B2):
        raise UsageError("--truth-B1 and --truth-B2 must be given together")
    return read_factors(args.truth_B1, args.truth_B2)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = SyntheticConfig(p=args.p, K=args.K, n=args.n, T=args.T, kernel=args.kernel,
                          topics_per_node=tuple(args.topics_per_node), magnitude_low=args.magnitude_low,
                          magnitude_high=args.magnitude_high, boost_factor=args.boost_factor,
                          boost_prob=args.boost_prob, sparsity=args.sparsity, seed=args.seed)
    truth, cascades = generate_dataset(cfg)
    out = _outdir(args.out)
    write_factors(out, truth)
    write_cascades(os.path.join(out, "cascades.jsonl"), cascades)
    write_json(os.path.join(out, "manifest.json"),
               {"command": "simulate", "config": cfg.to_dict(), "seed": cfg.seed, "version": __version__})
    return EXIT_OK


def _est_config(args) -> EstimationConfig:
    return EstimationConfig(algorithm=args.algo, lam=args.lam, s=args.s, eta=args.eta, tol=args.tol,
                            max_iters=args.max_iters, init_iters=args.init_iters, init_tol=args.init_tol,
                            per_column=args.per_column, step_growth=args.step_growth,
                            threads=args.threads, seed=args.seed)


def cmd_estimate(args) -> int:
    cascades = read_cascades(args.cascades)
    p = _num_nodes(args, cascades)
    config = _est_config(args)
    kernel = get_kernel(args.kernel)
    out = _outdir(args.out)
    missing = [c.id for c in cascades if c.topics is None]
    if args.unknown_topics:
        if args.mask:
            raise UsageError("--mask cannot be combined with --unknown-topics")
        factors, M, atrace = estimate_unknown_topics(cascades, args.K, config, kernel,
                                                     outer_iters=args.outer_iters, p=p)
        write_matrix(os.path.join(out, "topics_hat.csv"), M)
        trace = EstimationTrace(converged=atrace.converged, n_iter=atrace.n_outer,
                                stop_reason="converged" if atrace.converged else "max_iters")
        for f in atrace.objective:
            trace.append(f, float("nan"), None, float("nan"))
    else:
        if missing:
            raise DataError(f"cascade {missing[0]!r} has no topic weights (use --unknown-topics)")
        mask = read_matrix(args.mask) if args.mask else None
        if mask is not None and mask.shape != (p, p):
            raise DataError(f"mask must be {p}x{p}, got {mask.shape}")
        s = config.s if config.algorithm == "hard" else None
        init = initialize(cascades, ModelDims(p, args.K), kernel, s, config, mask)
        factors, trace = _run(cascades, config, init, kernel, _truth(args), mask)
    write_matrix(os.path.join(out, "B1_hat.csv"), factors.B1)
    write_matrix(os.path.join(out, "B2_hat.csv"), factors.B2)
    trace.to_csv(os.path.join(out, "trace.csv"))
    write_json(os.path.join(out, "manifest.json"),
               {"command": "estimate", "config": _echo(config), "K": args.K, "p": p,
                "kernel": kernel.name, "mask": args.mask, "unknown_topics": args.unknown_topics,
                "n_iter": trace.n_iter, "converged": trace.converged, "seed": args.seed,
                "version": __version__})
    return EXIT_OK


def cmd_baseline(args) -> int:
    cascades = read_cascades(args.cascades)
    p = _num_nodes(args, cascades)
    out = _outdir(args.out)
    if args.method == "netrate":
        model = fit_netrate(cascades, args.kernel, args.lam, args.tol, args.max_iters, p, args.threads)
        write_matrix(os.path.join(out, "A_hat.csv"), model.A)
    else:
        if args.K is None:
            raise UsageError("--K is required for topiccascade")
        model = fit_topiccascade(cascades, args.K, args.kernel, args.lam, args.tol, args.max_iters, p,
                                 args.threads)
        for k, A in enumerate(model.A_stack):
            write_matrix(os.path.join(out, f"A_hat_k{k}.csv"), A)
    write_json(os.path.join(out, "manifest.json"),
               {"command": "baseline", "method": args.method, "lambda": args.lam, "K": args.K, "p": p,
                "kernel": get_kernel(args.kernel).name, "n_iter": model.n_iter,
                "converged": model.converged, "version": __version__})
    return EXIT_OK


def cmd_infer_topics(args) -> int:
    cascades = read_cascades(args.cascades)
    factors = read_factors(args.B1, args.B2)
    M = infer_topics_batch(cascades, factors, args.kernel, tol=args.tol, max_iters=args.max_iters)
    write_matrix(args.out, M)
    return EXIT_OK


def _load_model(args, K):
    given = [x is not None for x in (args.B1, args.A, args.A_stack)]
    if sum(given) != 1:
        raise UsageError("give exactly one of --B1/--B2, --A or --A-stack")
    if args.B1 is not None:
        if args.B2 is None:
            raise UsageError("--B1 needs --B2")
        return read_factors(args.B1, args.B2)
    from .baselines import NetRateModel, TopicCascadeModel

    if args.A is not None:
        return NetRateModel(read_matrix(args.A))
    return TopicCascadeModel(np.stack([read_matrix(f) for f in args.A_stack]))


def cmd_evaluate(args) -> int:
    truth = _truth(args)
    model = _load_model(args, None)
    train = read_cascades(args.train) if args.train else None
    test = read_cascades(args.test)
    report = evaluate(model, train, test, truth, args.kernel, args.nnz_threshold, args.rate_floor)
    print(report.table())
    if args.out:
        write_json(args.out, report.to_dict())
    return EXIT_OK


def cmd_diagnose(args) -> int:
    cascades = read_cascades(args.cascades)
    truth = _truth(args)
    if truth is None:
        raise UsageError("diagnose needs --truth-B1 and --truth-B2")
    init = read_factors(args.init_B1, args.init_B2) if args.init_B1 else None
    consts = theory_constants(cascades, truth, args.kernel, args.s, args.s_star, init)
    report = consts.to_dict()
    write_json(args.out, report)
    if args.embeddings:
        emit_embeddings(truth if init is None else init, args.embeddings)
    for k in ("mu_hat", "L_hat", "sigma_star", "gamma", "xi2", "beta", "eta_bound", "eta_auto",
              "e_stat", "e_stat_M"):
        v = report[k]
        print(f"{k:<10}  {'-' if v is None else f'{v:.6g}'}")
    return EXIT_OK


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="infrec", description="Influence-receptivity cascade model")
    ap.add_argument("--version", action="version", version=__version__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, kernel=True):
        if kernel:
            sp.add_argument("--kernel", choices=["exp", "rayleigh"], default="exp")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=_positive_int, default=_default_threads())

    sp = sub.add_parser("simulate", help="draw ground-truth factors and cascades")
    sp.add_argument("--p", type=int, default=20)
    sp.add_argument("--K", type=int, default=3)
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--T", type=float, default=1.0)
    sp.add_argument("--topics-per-node", type=int, nargs=2, default=[2, 3], metavar=("LO", "HI"))
    sp.add_argument("--magnitude-low", type=float, default=0.8)
    sp.add_argument("--magnitude-high", type=float, default=1.8)
    sp.add_argument("--boost-factor", type=float, default=3.0)
    sp.add_argument("--boost-prob", type=float, default=0.3)
    sp.add_argument("--sparsity", type=int, default=None)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="fit the factors")
    sp.add_argument("--cascades", required=True)
    sp.add_argument("--K", type=_positive_int, required=True)
    sp.add_argument("--p", type=int, default=None, help="node count (default: from the data)")
    sp.add_argument("--algo", choices=["prox", "hard"], default="prox")
    sp.add_argument("--lambda", dest="lam", type=float, default=0.0)
    sp.add_argument("--s", type=_positive_int, default=None)
    sp.add_argument("--eta", type=_eta, default="auto")
    sp.add_argument("--step-growth", type=float, default=1.0,
                    help="multiply the step by this after each accepted iteration (1 = halving only)")
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iters", type=int, default=1000)
    sp.add_argument("--init-iters", type=int, default=300)
    sp.add_argument("--init-tol", type=float, default=1e-6)
    sp.add_argument("--per-column", action="store_true", help="threshold each column to s entries")
    sp.add_argument("--mask", default=None, help="CSV friendship matrix")
    sp.add_argument("--unknown-topics", action="store_true")
    sp.add_argument("--outer-iters", type=int, default=20)
    sp.add_argument("--truth-B1", default=None)
    sp.add_argument("--truth-B2", default=None)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("baseline", help="fit NetRate or TopicCascade")
    sp.add_argument("--cascades", required=True)
    sp.add_argument("--method", choices=["netrate", "topiccascade"], required=True)
    sp.add_argument("--K", type=_positive_int, default=None)
    sp.add_argument("--p", type=int, default=None)
    sp.add_argument("--lambda", dest="lam", type=float, default=0.0)
    sp.add_argument("--tol", type=float, default=1e-6)
    sp.add_argument("--max-iters", type=int, default=2000)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("infer-topics", help="infer topic weights with fixed factors")
    sp.add_argument("--cascades", required=True)
    sp.add_argument("--B1", required=True)
    sp.add_argument("--B2", required=True)
    sp.add_argument("--tol", type=float, default=1e-8)
    sp.add_argument("--max-iters", type=int, default=2000)
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_infer_topics)

    sp = sub.add_parser("evaluate", help="likelihood, estimation error and AIC/BIC")
    sp.add_argument("--test", required=True)
    sp.add_argument("--train", default=None)
    sp.add_argument("--B1", default=None)
    sp.add_argument("--B2", default=None)
    sp.add_argument("--A", default=None, help="single diffusion matrix (NetRate)")
    sp.add_argument("--A-stack", nargs="+", default=None, help="per-topic matrices (TopicCascade)")
    sp.add_argument("--truth-B1", default=None)
    sp.add_argument("--truth-B2", default=None)
    sp.add_argument("--nnz-threshold", type=float, default=1e-6)
    sp.add_argument("--rate-floor", type=float, default=0.0,
                    help="constant added to every off-diagonal rate before scoring")
    sp.add_argument("--out", default=None)
    common(sp)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("diagnose", help="Hessian extremes and convergence constants at the truth")
    sp.add_argument("--cascades", required=True)
    sp.add_argument("--truth-B1", required=True)
    sp.add_argument("--truth-B2", required=True)
    sp.add_argument("--init-B1", default=None)
    sp.add_argument("--init-B2", default=None)
    sp.add_argument("--s", type=_positive_int, default=None)
    sp.add_argument("--s-star", type=_positive_int, default=None)
    sp.add_argument("--embeddings", default=None, help="write node embeddings CSV here")
    sp.add_argument("--out", required=True)
    common(sp)
    sp.set_defaults(func=cmd_diagnose)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ShapeError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
