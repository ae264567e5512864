"""Multi-seed orchestration, aggregation and rate fitting."""

import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..algorithms import COLUMNS, double_loop_train, ssac_train, zeroth_order_train
from ..env import RngStream
from ..errors import DivergenceError, ExperimentError, FitError, NumericError
from ..oracle import solve_are
from .config import ALGORITHMS, merge_hyper

THREADS_ENV = "LQRLAB_THREADS"
Z95 = 1.96
TRAINERS = {
    "ssac": ssac_train,
    "zeroth_order": zeroth_order_train,
    "double_loop": double_loop_train,
}
AGGREGATE_SKIP = ("iter",)


@dataclass
class AggregateSeries:
    """Per recorded iteration: mean and 95% normal-approximation band for each metric.

    With a single seed ``lo``/``hi`` are NaN (no interval).
    """

    iters: np.ndarray
    n_seeds: int
    mean: dict = field(default_factory=dict)
    lo: dict = field(default_factory=dict)
    hi: dict = field(default_factory=dict)

    @property
    def metrics(self):
        return list(self.mean)

    def __len__(self):
        return len(self.iters)


@dataclass
class ExperimentResult:
    algorithm: str
    seeds: list
    traces: dict  # seed -> RunTrace (diverged runs keep their partial trace)
    failures: dict  # seed -> message
    aggregate: AggregateSeries = None
    hyper: object = None

    @property
    def ok_seeds(self):
        return [s for s in self.seeds if s not in self.failures]


def worker_count(n_jobs):
    raw = os.environ.get(THREADS_ENV)
    cap = os.cpu_count() or 1
    if raw:
        try:
            cap = max(1, int(raw))
        except ValueError:
            pass
    return max(1, min(cap, n_jobs))


def _run_one(job):
    algorithm, system, hyper, seed, stride = job
    trainer = TRAINERS[algorithm]
    try:
        return seed, trainer(system, hyper, RngStream(seed), stride=stride), None
    except (DivergenceError, NumericError) as exc:
        return seed, getattr(exc, "trace", None), f"{type(exc).__name__}: {exc}"


def run_seeds(algorithm, system, hyper, seeds, stride, workers=None):
    """Run one trainer per seed; results are joined in seed-list order."""
    jobs = [(algorithm, system, hyper, s, stride) for s in seeds]
    workers = worker_count(len(jobs)) if workers is None else workers
    if workers <= 1:
        results = [_run_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs))
    traces, failures = {}, {}
    for seed, trace, err in results:
        traces[seed] = trace
        if err is not None:
            failures[seed] = err
    return traces, failures


def aggregate_traces(traces):
    """Mean and mean +/- 1.96 stderr (n - 1 normalisation) over the common recorded iterations."""
    traces = list(traces)
    if not traces:
        raise ExperimentError("nothing to aggregate")
    iters = traces[0]["iter"]
    for tr in traces[1:]:
        iters = np.intersect1d(iters, tr["iter"])
    n = len(traces)
    agg = AggregateSeries(np.asarray(iters, dtype=np.int64), n)
    for name in COLUMNS:
        if name in AGGREGATE_SKIP:
            continue
        stack = np.array(
            [np.asarray(tr[name], dtype=float)[np.isin(tr["iter"], iters)] for tr in traces]
        ).reshape(n, len(iters))
        if stack.size and np.all(np.isnan(stack)):
            continue
        mean = np.mean(stack, axis=0)
        if n >= 2:
            half = Z95 * np.std(stack, axis=0, ddof=1) / math.sqrt(n)
            lo, hi = mean - half, mean + half
        else:
            lo = hi = np.full_like(mean, np.nan)
        agg.mean[name], agg.lo[name], agg.hi[name] = mean, lo, hi
    return agg


def report(message):
    print(message, file=sys.stderr)


def run_experiment(cfg, algorithm=None, hyper=None, seeds=None, workers=None):
    """Run the configured trainer once per seed and aggregate the surviving runs."""
    algorithm = algorithm or cfg.algorithm
    hyper = hyper if hyper is not None else cfg.hypers[algorithm]
    seeds = list(cfg.seeds if seeds is None else seeds)
    stride = cfg.stride_for(algorithm, hyper)
    traces, failures = run_seeds(algorithm, cfg.system, hyper, seeds, stride, workers)
    for seed, msg in failures.items():
        report(f"!! {algorithm} seed {seed} DIVERGED and is excluded from aggregation: {msg}")
    result = ExperimentResult(algorithm, seeds, traces, failures, hyper=hyper)
    ok = [traces[s] for s in result.ok_seeds]
    if not ok:
        err = ExperimentError(f"{algorithm}: all {len(seeds)} seeds diverged")
        err.result = result
        raise err
    result.aggregate = aggregate_traces(ok)
    return result


def budget_hypers(cfg, budget=None):
    """Hyperparameters for all three learners scaled to a shared interaction budget."""
    block = cfg.compare
    budget = int(budget or (block.budget if block else 200_000))
    overrides = block.overrides if block else {}
    out = {}
    for alg in ALGORITHMS:
        hp = merge_hyper(alg, cfg.hypers.get(alg), overrides.get(alg))
        if alg == "ssac":
            hp = replace(hp, T=budget)
        elif alg == "zeroth_order":
            hp = replace(hp, J_outer=budget // hp.samples_per_step)
        else:
            hp = replace(hp, J_outer=budget // hp.T_inner)
        out[alg] = hp
    return budget, out


def final_gain_errors(cfg, result):
    """||K - K*||_F at budget exhaustion per seed; a diverged seed scores +inf."""
    K_star = solve_are(cfg.system)[1].K
    errs = {}
    for seed in result.seeds:
        tr = result.traces.get(seed)
        if seed in result.failures or tr is None or tr.final_K is None:
            errs[seed] = math.inf
        else:
            errs[seed] = float(np.linalg.norm(tr.final_K - K_star))
    return errs


def run_compare(cfg, n_runs=None, budget=None, workers=None):
    """All three learners on the same seeds and interaction budget.

    Returns ``(budget, {algorithm: ExperimentResult})``; an algorithm whose
    seeds all diverged keeps ``aggregate = None``.
    """
    seeds = list(cfg.seeds)
    if n_runs is not None:
        if n_runs < 1 or n_runs > len(seeds):
            raise ExperimentError(f"--runs must be between 1 and {len(seeds)} (the config's seed count)")
        seeds = seeds[:n_runs]
    budget, hypers = budget_hypers(cfg, budget)
    results = {}
    for alg, hp in hypers.items():
        try:
            results[alg] = run_experiment(cfg, alg, hp, seeds, workers)
        except ExperimentError as exc:
            report(f"!! {exc}")
            results[alg] = exc.result
    return budget, results


def fit_rate(iterations, values, window=0.1, min_points=10):
    """Least-squares slope of log(value) against log(iteration).

    Only points with iteration >= window * max(iteration) enter the fit; the
    default keeps the last decade.
    """
    it = np.asarray(iterations, dtype=float)
    v = np.asarray(values, dtype=float)
    if it.shape != v.shape or it.ndim != 1:
        raise FitError("iterations and values must be 1-D arrays of equal length")
    sel = it >= window * np.max(it) if it.size else np.zeros(0, bool)
    it, v = it[sel], v[sel]
    if it.size < min_points:
        raise FitError(f"need at least {min_points} points in the window, got {it.size}")
    if np.any(~np.isfinite(v)) or np.any(v <= 0) or np.any(it <= 0):
        raise FitError("non-positive or non-finite values in the fit window")
    slope, _ = np.polyfit(np.log(it), np.log(v), 1)
    return float(slope)


def log_spaced_horizons(t_min, t_max, count):
    return sorted({int(round(t)) for t in np.geomspace(t_min, t_max, count)})


def horizon_sweep(system, hyper, horizons, seeds, workers=None):
    """Final A_T, B_T, C_T of separate runs at each horizon T (stepsizes follow c / sqrt(T)).

    Returns a dict with ``T`` and ``(len(horizons), len(seeds))`` arrays; a
    diverged run leaves NaN in its cell.
    """
    out = {"T": np.asarray(horizons, dtype=float)}
    for name in ("A_T", "B_T", "C_T", "actor_gap"):
        out[name] = np.full((len(horizons), len(seeds)), np.nan)
    for i, T in enumerate(horizons):
        hp = replace(hyper, T=int(T))
        traces, failures = run_seeds("ssac", system, hp, seeds, stride=max(1, int(T)), workers=workers)
        for j, seed in enumerate(seeds):
            if seed in failures:
                continue
            tr = traces[seed]
            for name in ("A_T", "B_T", "C_T", "actor_gap"):
                out[name][i, j] = tr[name][-1]
    return out
