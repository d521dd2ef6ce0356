"""Command-line entry point: ``akkm {gen,cluster,ensemble,bounds,bench,metrics}``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .clustering import ConvergenceError, SolverConfig, SpectrumError, kernel_kmeans
from .core import STREAM_DATA, STREAM_SAMPLE, Membership, make_rng
from .data import DataFormatError, generate_synthetic, save_dataset
from .experiment import ConfigError, ExperimentConfig, load_config, load_data, run_experiment, scaling_bench
from .kernels import MemoryBudgetError, full_kernel
from .linalg import SingularKernelError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("approxkkm")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(payload: str, out: str | None) -> None:
    if out:
        Path(out).write_text(payload)
    else:
        sys.stdout.write(payload + ("\n" if not payload.endswith("\n") else ""))


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if args.seed:
        changes["seeds"] = list(args.seed)
    if getattr(args, "algorithm", None):
        changes["algorithm"] = args.algorithm
    if getattr(args, "m", None):
        changes["m"] = args.m
    if getattr(args, "workers", None):
        changes["workers"] = args.workers
    if changes:
        cfg = ExperimentConfig(**{**cfg.to_dict(), **changes})
    return cfg


def _report_out(report, args) -> int:
    fmt = args.format or ("csv" if args.out and args.out.endswith(".csv") else "json")
    _emit(report.to_csv() if fmt == "csv" else report.to_json(), args.out)
    if report.failures:
        kinds = {f["type"] for f in report.failures}
        data_errors = {"DataFormatError", "FileNotFoundError", "ConfigError"}
        return EXIT_DATA if kinds <= data_errors else EXIT_NUMERIC
    return EXIT_OK


def cmd_gen(args) -> int:
    extra = {}
    if args.centers is not None:
        extra["centers"] = args.centers
    seed = args.seed[-1] if args.seed else 0
    X = generate_synthetic(args.kind, args.n, args.noise, make_rng(seed, STREAM_DATA), **extra)
    if not args.out:
        raise UsageError("gen needs --out")
    save_dataset(X, args.out, args.format or "csv")
    log.info("wrote %d x %d points to %s", X.n, X.d, args.out)
    return EXIT_OK


def cmd_cluster(args) -> int:
    cfg = _config(args)
    return _report_out(run_experiment(cfg, write=False), args)


def cmd_ensemble(args) -> int:
    cfg = _config(args)
    changes = {"algorithm": "ensemble_akkm"}
    if args.r:
        changes["r"] = args.r
    cfg = ExperimentConfig(**{**cfg.to_dict(), **changes})
    return _report_out(run_experiment(cfg, write=False), args)


def cmd_bench(args) -> int:
    cfg = _config(args)
    report = scaling_bench(cfg, args.n, args.m or cfg.m, repeats=args.repeats)
    return _report_out(report, args)


def cmd_bounds(args) -> int:
    from . import bounds

    cfg = _config(args)
    X = load_data(cfg)
    K = full_kernel(X, cfg.kernel, max_n=cfg.max_full_n)
    C = cfg.C or (len(np.unique(X.labels)) if X.labels is not None else None)
    if C is None:
        raise UsageError("C is not set and the dataset has no labels")
    seed = cfg.seeds[0]
    eigs = bounds.EigenSystem.of(K)
    m_values = args.m_values or [cfg.m]
    out = {"n": X.n, "C": C, "delta": args.delta, "nystrom": [], "expected_loss": [], "spectral_ratio": {}}
    U = kernel_kmeans(K, C, SolverConfig(seed=seed)).membership if X.labels is None or args.use_kkm \
        else Membership.from_labels(X.labels)
    for m in m_values:
        rep = bounds.nystrom_bound_report(K, C, m, delta=args.delta, trials=args.trials,
                                          rng=make_rng(seed, STREAM_SAMPLE), eigs=eigs)
        out["nystrom"].append(rep.to_dict())
        if args.masks:
            out["expected_loss"].append(bounds.expected_loss_monte_carlo(K, U, m, masks=args.masks,
                                                                          rng=make_rng(seed, STREAM_SAMPLE + 10)))
        out["spectral_ratio"][str(m)] = bounds.spectral_ratio_bound(eigs, C, m)
    _emit(json.dumps(out, indent=2, sort_keys=True), args.out)
    return EXIT_OK


def _read_labels(path) -> np.ndarray:
    text = Path(path).read_text().replace(",", " ").split()
    try:
        return np.asarray([int(float(t)) for t in text], dtype=np.int64)
    except ValueError:
        raise DataFormatError(f"{path}: labels must be integers") from None


def cmd_metrics(args) -> int:
    from .metrics import ari, nmi

    a, b = _read_labels(args.a), _read_labels(args.b)
    if a.shape != b.shape:
        raise DataFormatError(f"label files hold {a.size} and {b.size} entries")
    payload = {"n": int(a.size), "nmi": nmi(a, b), "ari": ari(a, b)}
    _emit(json.dumps(payload, indent=2, sort_keys=True), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="akkm", description="Approximate kernel k-means experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, config=True, formats=("json", "csv")):
        if config:
            sp.add_argument("config", nargs="?", help="experiment config (JSON or YAML)")
        sp.add_argument("--seed", type=int, action="append", help="seed (repeatable); overrides the config")
        sp.add_argument("--out", help="output path (stdout if omitted)")
        sp.add_argument("--format", choices=formats)

    g = sub.add_parser("gen", help="write a synthetic dataset")
    g.add_argument("kind", choices=("two_rings", "gaussian_blobs"))
    g.add_argument("--n", type=int, default=500)
    g.add_argument("--noise", type=float, default=0.05)
    g.add_argument("--centers", type=int)
    common(g, config=False, formats=("csv", "libsvm"))
    g.set_defaults(func=cmd_gen)

    c = sub.add_parser("cluster", help="run one clustering algorithm over several seeds")
    common(c)
    c.add_argument("--algorithm", choices=("kmeans", "kernel_kmeans", "tkkm", "akkm", "nystrom_spectral",
                                           "ensemble_akkm"))
    c.add_argument("--m", type=int)
    c.add_argument("--workers", type=int)
    c.set_defaults(func=cmd_cluster)

    e = sub.add_parser("ensemble", help="ensemble aKKm with MCLA consensus")
    common(e)
    e.add_argument("--m", type=int)
    e.add_argument("--r", type=int)
    e.add_argument("--workers", type=int)
    e.set_defaults(func=cmd_ensemble)

    b = sub.add_parser("bounds", help="empirical vs theoretical approximation-error bounds")
    common(b)
    b.add_argument("--m", dest="m_values", type=int, action="append", help="sample size (repeatable)")
    b.add_argument("--delta", type=float, default=0.1)
    b.add_argument("--trials", type=int, default=50)
    b.add_argument("--masks", type=int, default=0, help="Monte-Carlo masks for the expected-loss check")
    b.add_argument("--use-kkm", action="store_true", help="check the bound at the kernel k-means partition")
    b.set_defaults(func=cmd_bounds)

    s = sub.add_parser("bench", help="aKKm clustering time versus n at fixed m")
    common(s)
    s.add_argument("--n", type=int, action="append", required=True)
    s.add_argument("--m", type=int)
    s.add_argument("--repeats", type=int, default=3)
    s.set_defaults(func=cmd_bench)

    mt = sub.add_parser("metrics", help="NMI and ARI between two label files")
    mt.add_argument("a")
    mt.add_argument("b")
    mt.add_argument("--out")
    mt.set_defaults(func=cmd_metrics)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, MemoryBudgetError) as exc:
        print(f"akkm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, FileNotFoundError, OSError) as exc:
        print(f"akkm: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ConvergenceError, SpectrumError, SingularKernelError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"akkm: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"akkm: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
