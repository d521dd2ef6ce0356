"""Batch experiment harness: configuration, per-seed runs, timing splits and reports."""
from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import clustering as cl
from .core import STREAM_DATA, STREAM_ENSEMBLE, STREAM_INIT, DataMatrix, Membership, make_rng
from .data import generate_synthetic, load_dataset
from .ensemble import mcla
from .kernels import DEFAULT_MAX_FULL_N, KernelSpec, full_kernel, kernel_diagonal, rect_from_full, rect_kernel
from .metrics import ari, error_reduction, nmi
from .sampling import SamplePlan, draw_sample

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ALGORITHMS = ("kmeans", "kernel_kmeans", "tkkm", "akkm", "nystrom_spectral", "ensemble_akkm")
SAMPLED = ("tkkm", "akkm", "nystrom_spectral", "ensemble_akkm")
METRICS = ("nmi", "ari", "error_reduction")


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: dict = field(default_factory=lambda: {"synthetic": {"kind": "two_rings", "n": 500, "noise": 0.05}})
    kernel: KernelSpec = field(default_factory=lambda: KernelSpec("rbf", sigma=1.5))
    algorithm: str = "akkm"
    m: int = 50
    C: int | None = None
    r: int = 10
    seeds: list[int] = field(default_factory=lambda: list(range(10)))
    sampling: str = "uniform"
    solver: dict = field(default_factory=dict)
    metrics: list[str] = field(default_factory=lambda: list(METRICS))
    output: str | None = None
    dump_memberships: bool = False
    max_full_n: int = DEFAULT_MAX_FULL_N
    validation_max_n: int = 5000
    workers: int = 1

    def __post_init__(self):
        if isinstance(self.kernel, dict):
            self.kernel = KernelSpec.from_dict(self.kernel)
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; expected one of {ALGORITHMS}")
        if self.C is not None and self.C < 2:
            raise ConfigError("C must be >= 2 for clustering runs")
        if self.algorithm in SAMPLED and self.m < 1:
            raise ConfigError("m must be >= 1")
        if self.r < 1:
            raise ConfigError("r must be >= 1")
        if not self.seeds:
            raise ConfigError("at least one seed is required")
        bad = set(self.metrics) - set(METRICS)
        if bad:
            raise ConfigError(f"unknown metrics {sorted(bad)}")
        SamplePlan(self.sampling, max(self.m, 1))
        allowed = {f.name for f in fields(cl.SolverConfig)} - {"init", "seed", "record_memberships"}
        bad = set(self.solver) - allowed
        if bad:
            raise ConfigError(f"unknown solver options {sorted(bad)}")
        if not ("synthetic" in self.dataset) ^ ("path" in self.dataset):
            raise ConfigError("dataset needs exactly one of 'synthetic' or 'path'")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown config keys {sorted(bad)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel"] = self.kernel.to_dict()
        return d


def load_config(path) -> ExperimentConfig:
    """Read an ExperimentConfig from a JSON or YAML file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml
        raw = yaml.safe_load(text)
    else:
        raw = json.loads(text)
    if not isinstance(raw, dict):
        raise ConfigError("config file must hold a mapping at the top level")
    return ExperimentConfig.from_dict(raw)


def load_data(cfg: ExperimentConfig) -> DataMatrix:
    ds = cfg.dataset
    if "path" in ds:
        path = Path(ds["path"])
        if not path.exists():
            raise FileNotFoundError(f"dataset file {path} does not exist")
        return load_dataset(path, ds.get("format"), ds.get("labels"), ds.get("n_features"))
    spec = dict(ds["synthetic"])
    kind = spec.pop("kind", "two_rings")
    n = int(spec.pop("n", 500))
    noise = float(spec.pop("noise", 0.05))
    seed = int(spec.pop("seed", 0))
    return generate_synthetic(kind, n, noise, make_rng(seed, STREAM_DATA), **spec)


@dataclass
class RunReport:
    config: dict
    n: int
    d: int
    C: int
    per_seed: list[dict]
    aggregate: dict
    schema_version: int = SCHEMA_VERSION
    failures: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        cols = sorted({k for row in self.per_seed for k, v in row.items() if not isinstance(v, (list, dict))})
        buf = io.StringIO()
        w = csv.DictWriter(buf, fieldnames=cols, extrasaction="ignore")
        w.writeheader()
        for row in self.per_seed:
            w.writerow(row)
        return buf.getvalue()

    def write(self, path, fmt: str = "json") -> None:
        Path(path).write_text(self.to_csv() if fmt == "csv" else self.to_json())


def _finite(x):
    return x if x is None or math.isfinite(x) else None


def aggregate(per_seed: list[dict]) -> dict:
    """Mean and sample standard deviation of every numeric per-seed field."""
    keys = sorted({k for row in per_seed for k, v in row.items()
                   if isinstance(v, (int, float)) and not isinstance(v, bool) and k != "seed"})
    out = {}
    for k in keys:
        vals = np.array([row[k] for row in per_seed if row.get(k) is not None], dtype=np.float64)
        if vals.size == 0:
            continue
        out[k] = {
            "mean": float(vals.mean()),
            "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
            "count": int(vals.size),
        }
    return out


class _Timer:
    def __init__(self):
        self.seconds = 0.0

    def __enter__(self):
        self._t = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds += time.perf_counter() - self._t


def _solver(cfg: ExperimentConfig, seed: int, **extra) -> cl.SolverConfig:
    return cl.SolverConfig(seed=seed, **{**cfg.solver, **extra})


def _run_seed(cfg: ExperimentConfig, X: DataMatrix, C: int, seed: int, truth: Membership | None) -> dict:
    spec = cfg.kernel
    t_kernel, t_cluster, t_sample, t_mcla = _Timer(), _Timer(), _Timer(), _Timer()
    row: dict = {"seed": seed}
    small = X.n <= min(cfg.validation_max_n, cfg.max_full_n)
    K = None
    scfg = _solver(cfg, seed)
    alg = cfg.algorithm

    def sample(stream_seed: int, Kfull=None):
        plan = SamplePlan(cfg.sampling, cfg.m, stream_seed)
        if cfg.sampling in ("diagonal", "column_norm") and Kfull is None:
            raise ConfigError(f"{cfg.sampling} sampling requires the full kernel; n={X.n}")
        with t_sample:
            return draw_sample(plan, X=X, K=Kfull, n=X.n)

    if cfg.sampling in ("diagonal", "column_norm") and alg in SAMPLED:
        with t_kernel:
            K = full_kernel(X, spec, max_n=cfg.max_full_n)

    initial_error = final_error = None
    if alg == "kmeans":
        with t_cluster:
            res = cl.kmeans(X, C, scfg)
    elif alg == "kernel_kmeans":
        with t_kernel:
            K = full_kernel(X, spec, max_n=cfg.max_full_n)
        with t_cluster:
            res = cl.kernel_kmeans(K, C, scfg)
        initial_error = res.objective_trace[0]
        final_error = cl.clustering_objective(K, res.membership)
    elif alg in ("akkm", "tkkm", "nystrom_spectral"):
        idx = sample(seed, K)
        with t_kernel:
            rk = rect_from_full(K, idx) if K is not None else rect_kernel(X, idx, spec)
        with t_cluster:
            if alg == "akkm":
                diag = kernel_diagonal(spec, X)
                res = cl.approx_kkm_from_rect(rk, C, scfg, diag)
            elif alg == "tkkm":
                res = cl.two_step_from_rect(rk, C, scfg)
            else:
                res = cl.nystrom_spectral(rk.KB, rk.Khat, C, scfg)
        if alg == "akkm":
            initial_error = res.objective_offset + res.objective_trace[0]
            final_error = res.objective_offset + cl.restricted_objective(rk, res.membership, scfg.ridge)
    else:  # ensemble_akkm
        parts = []
        ens_rng = make_rng(seed, STREAM_ENSEMBLE)
        member_seeds = [int(s) for s in ens_rng.integers(0, 2**63 - 1, size=cfg.r)]
        diag = kernel_diagonal(spec, X)
        member_nmi = []
        member_iters = 0
        for ms in member_seeds:
            idx = sample(ms, K)
            with t_kernel:
                rk = rect_from_full(K, idx) if K is not None else rect_kernel(X, idx, spec)
            with t_cluster:
                part = cl.approx_kkm_from_rect(rk, C, _solver(cfg, ms), diag)
            parts.append(part.membership)
            member_iters += part.iterations
            if truth is not None:
                member_nmi.append(nmi(part.membership, truth))
        with t_mcla:
            consensus = mcla(parts, C, make_rng(seed, STREAM_ENSEMBLE + 100))
        res = cl.ClusterResult(consensus, [], member_iters, True)
        row["mcla_seconds"] = t_mcla.seconds
        if member_nmi:
            row["member_nmi_mean"] = float(np.mean(member_nmi))
        if truth is not None:
            row["consensus_nmi"] = nmi(consensus, truth)

    U = res.membership
    row.update(
        kernel_seconds=t_kernel.seconds,
        clustering_seconds=t_cluster.seconds,
        sampling_seconds=t_sample.seconds,
        iterations=int(res.iterations),
        converged=bool(res.converged),
        empty_cluster_repairs=int(res.empty_cluster_repairs),
        populated_clusters=int(C - len(U.empty_clusters)),
    )
    if "nmi" in cfg.metrics and truth is not None:
        row["nmi"] = nmi(U, truth)

    if "error_reduction" in cfg.metrics:
        if initial_error is None and small:
            if K is None:
                with t_kernel:
                    K = full_kernel(X, spec, max_n=cfg.max_full_n)
                row["kernel_seconds"] = t_kernel.seconds
            init = cl.random_membership(X.n, C, make_rng(seed, STREAM_INIT))
            initial_error = cl.clustering_objective(K, init)
            final_error = cl.clustering_objective(K, U)
        if initial_error is not None and initial_error > 0:
            row["initial_error"] = float(initial_error)
            row["final_error"] = float(final_error)
            row["error_reduction"] = _finite(float(error_reduction(initial_error, final_error)))

    if "ari" in cfg.metrics:
        if alg != "kernel_kmeans" and small:
            Kref = K if K is not None else full_kernel(X, spec, max_n=cfg.max_full_n)
            ref = cl.kernel_kmeans(Kref, C, scfg).membership
            row["ari"] = ari(U, ref)
            row["ari_reference"] = "kernel_kmeans"
        elif truth is not None:
            row["ari"] = ari(U, truth)
            row["ari_reference"] = "truth"

    if cfg.dump_memberships:
        row["membership"] = [int(a) for a in U.assign]
    return row


def run_experiment(cfg: ExperimentConfig, X: DataMatrix | None = None, write: bool = True) -> RunReport:
    """Run the configured algorithm once per seed and aggregate the per-seed metrics.

    A failing seed is recorded under ``failures``; the other seeds still run.
    With ``cfg.workers > 1`` seeds run in a thread pool; each seed owns its
    random streams, so the report does not depend on the worker count.
    """
    X = X if X is not None else load_data(cfg)
    truth = Membership.from_labels(X.labels) if X.labels is not None else None
    C = cfg.C if cfg.C is not None else (truth.C if truth is not None else None)
    if C is None:
        raise ConfigError("C is not set and the dataset has no labels to infer it from")
    if cfg.algorithm in SAMPLED and cfg.m > X.n:
        raise ConfigError(f"m={cfg.m} exceeds n={X.n}")

    def one(seed):
        try:
            return _run_seed(cfg, X, C, int(seed), truth), None
        except Exception as exc:  # keep the other seeds' results
            log.exception("seed %s failed", seed)
            return None, {"seed": int(seed), "error": f"{type(exc).__name__}: {exc}", "type": type(exc).__name__}

    if cfg.workers > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            results = list(pool.map(one, cfg.seeds))
    else:
        results = [one(s) for s in cfg.seeds]
    per_seed = [r for r, _ in results if r is not None]
    failures = [f for _, f in results if f is not None]
    report = RunReport(cfg.to_dict(), X.n, X.d, C, per_seed, aggregate(per_seed), failures=failures)
    if write and cfg.output:
        report.write(cfg.output, "csv" if str(cfg.output).endswith(".csv") else "json")
    return report


def strip_timings(d):
    """Copy of a report dict without wall-clock fields (for determinism comparisons)."""
    if isinstance(d, dict):
        return {k: strip_timings(v) for k, v in d.items() if not k.endswith("seconds")}
    if isinstance(d, list):
        return [strip_timings(v) for v in d]
    return d


def scaling_bench(cfg: ExperimentConfig, n_values, m_fixed: int, repeats: int = 3) -> RunReport:
    """Clustering wall-clock of aKKm at fixed m for growing n (synthetic data only).

    Each n is timed ``repeats`` times (seeds cfg.seeds[0] + rep); the median is
    reported together with the ratio of successive medians.
    """
    if "synthetic" not in cfg.dataset:
        raise ConfigError("scaling_bench needs a synthetic dataset source")
    n_values = [int(n) for n in n_values]
    if any(b <= a for a, b in zip(n_values, n_values[1:])):
        raise ConfigError("n_values must be strictly increasing")
    rows = []
    base_seed = int(cfg.seeds[0])
    for n in n_values:
        syn = {**cfg.dataset["synthetic"], "n": n}
        X = load_data(ExperimentConfig(**{**cfg.to_dict(), "dataset": {"synthetic": syn}}))
        C = cfg.C or int(np.unique(X.labels).size)
        times, ktimes, iters, per_iter = [], [], [], []
        for rep in range(repeats):
            seed = base_seed + rep
            idx = draw_sample(SamplePlan("uniform", m_fixed, seed), n=n)
            t0 = time.perf_counter()
            rk = rect_kernel(X, idx, cfg.kernel)
            diag = kernel_diagonal(cfg.kernel, X)
            t1 = time.perf_counter()
            res = cl.approx_kkm_from_rect(rk, C, _solver(cfg, seed), diag)
            t2 = time.perf_counter()
            ktimes.append(t1 - t0)
            times.append(t2 - t1)
            iters.append(res.iterations)
            per_iter.append((t2 - t1) / res.iterations)
        rows.append({
            "n": n, "m": m_fixed,
            "clustering_seconds": float(np.median(times)),
            "kernel_seconds": float(np.median(ktimes)),
            "per_iteration_seconds": float(np.median(per_iter)),
            "iterations": [int(i) for i in iters],
            "clustering_seconds_runs": [float(t) for t in times],
        })
    ratios = [b["clustering_seconds"] / a["clustering_seconds"] for a, b in zip(rows, rows[1:])]
    return RunReport(cfg.to_dict(), n_values[-1], 0, cfg.C or 0, rows, aggregate(rows),
                     extra={"timing_ratios": ratios,
                            "per_iteration_ratios": [b["per_iteration_seconds"] / a["per_iteration_seconds"]
                                                     for a, b in zip(rows, rows[1:])]})
