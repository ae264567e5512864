"""Command-line entry point: ``lqrlab {oracle,train,compare,verify}``."""

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from ..errors import ConfigError, ExperimentError, InstabilityError, LqrLabError
from ..oracle import analytic_report, solve_are
from .config import ALGORITHMS, load_config, resolve_config_path
from .experiment import final_gain_errors, run_compare, run_experiment
from .output import emit_csv, fmt, header_lines, write_aggregate_csv, write_rows
from .plot import emit_svg_plot, render_svg, write_svg
from .verify import run_verify

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    def __init__(self, message, parser=None):
        super().__init__(message)
        self.parser = parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}", self)


def build_parser():
    p = _Parser(prog="lqrlab", description="Actor-critic LQR laboratory")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    o = sub.add_parser("oracle", help="print the exact analytic quantities for a gain as JSON")
    o.add_argument("--config", required=True, help="config file or bundled name (example1, example2)")
    o.add_argument("--gain", required=True, help="gain as a JSON nested list, a JSON file, or 'optimal'")

    t = sub.add_parser("train", help="run the configured learner and write traces")
    t.add_argument("--config", required=True)
    t.add_argument("--seed", type=int, help="run only this seed (default: all configured seeds)")
    t.add_argument("--algorithm", choices=sorted(ALGORITHMS), help="override the configured learner")
    t.add_argument("--out", required=True, help="output directory")

    c = sub.add_parser("compare", help="all three learners under a shared interaction budget")
    c.add_argument("--config", required=True)
    c.add_argument("--runs", type=int, required=True, help="number of seeds, taken from the config's list")
    c.add_argument("--budget", type=int, help="override the config's interaction budget")
    c.add_argument("--out", required=True)

    sub.add_parser("verify", help="run the oracle / invariant suite; exit 0 iff everything passes")
    return p


def _load(arg):
    try:
        path = resolve_config_path(arg)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {arg}") from None
    try:
        return load_config(path)
    except ConfigError as exc:
        raise UsageError(f"invalid config: {exc}") from None


def _parse_gain(text, cfg):
    if text == "optimal":
        return solve_are(cfg.system)[1].K
    p = Path(text)
    try:
        raw = json.loads(p.read_text()) if p.exists() else json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--gain: not valid JSON ({exc.msg})") from None
    K = np.array(raw, dtype=float)
    if K.shape != (cfg.system.k, cfg.system.d):
        raise UsageError(f"--gain: expected a {cfg.system.k}x{cfg.system.d} matrix, got shape {K.shape}")
    return K


def cmd_oracle(args):
    cfg = _load(args.config)
    K = _parse_gain(args.gain, cfg)
    try:
        rep = analytic_report(cfg.system, K)
    except InstabilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    print(json.dumps(rep.to_dict(), indent=2))
    return EXIT_OK


def cmd_train(args):
    cfg = _load(args.config)
    algorithm = args.algorithm or cfg.algorithm
    if algorithm not in cfg.hypers:
        raise UsageError(f"config has no '{algorithm}' block")
    seeds = cfg.seeds if args.seed is None else [args.seed]
    try:
        result = run_experiment(cfg, algorithm, seeds=seeds)
    except ExperimentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        emit_csv(exc.result, cfg, args.out)
        return EXIT_FAIL
    paths = emit_csv(result, cfg, args.out)
    metric = "actor_gap"
    paths.append(emit_svg_plot(result.aggregate, metric, Path(args.out) / f"{algorithm}_{metric}.svg",
                               label=algorithm, title=f"{cfg.name}: {algorithm}"))
    for p in paths:
        print(p)
    return EXIT_OK


def cmd_compare(args):
    cfg = _load(args.config)
    try:
        budget, results = run_compare(cfg, n_runs=args.runs, budget=args.budget)
    except ExperimentError as exc:
        raise UsageError(str(exc)) from None
    out = Path(args.out)
    seeds = cfg.seeds[: args.runs]
    series = []
    summary_rows = []
    for alg, res in results.items():
        extra = [f"budget: {budget}", f"hyper: {_hyper_text(res.hyper)}",
                 f"aggregated seeds: {' '.join(str(s) for s in res.ok_seeds) or 'none'}"]
        if res.failures:
            extra.append(f"excluded (diverged): {' '.join(str(s) for s in res.failures)}")
        write_aggregate_csv(res.aggregate, out / f"{alg}_aggregate.csv", header_lines(cfg, seeds, alg, extra))
        errs = final_gain_errors(cfg, res)
        for seed in seeds:
            status = "diverged" if seed in res.failures else "ok"
            summary_rows.append([alg, str(seed), status, fmt(errs[seed])])
        med = float(np.median(list(errs.values())))
        label = alg if res.aggregate is not None else f"{alg} (all seeds diverged)"
        print(f"{alg:>13}: median ||K - K*||_F at budget {med:.4g}; diverged {len(res.failures)}/{len(seeds)}")
        if res.aggregate is not None:
            series.append(_budget_series(res, errs, label, budget))
        else:
            series.append({"label": label, "x": [], "mean": []})
    write_rows(out / "final_gain_error.csv", header_lines(cfg, seeds, "all", [f"budget: {budget}"]),
           ("algorithm", "seed", "status", "k_err"), summary_rows)
    write_svg(
        render_svg(series, "environment interactions", "||K - K*||_F", f"{cfg.name}: shared budget {budget}"),
        out / "comparison_k_err.svg",
    )
    print(out)
    return EXIT_OK


def _budget_series(res, errs, label, budget):
    """k_err against interactions consumed *before* each recorded iterate, closed by the final gain."""
    agg = res.aggregate
    per_iter = agg.mean["samples"][0]
    x = agg.mean["samples"] - per_iter
    final = np.array([errs[s] for s in res.ok_seeds])
    half = 1.96 * np.std(final, ddof=1) / math.sqrt(final.size) if final.size > 1 else np.nan
    fm = float(np.mean(final))
    return {
        "label": label,
        "x": np.append(x, budget),
        "mean": np.append(agg.mean["k_err"], fm),
        "lo": np.append(agg.lo["k_err"], fm - half),
        "hi": np.append(agg.hi["k_err"], fm + half),
    }


def _hyper_text(hp):
    parts = []
    for k, v in vars(hp).items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        parts.append(f"{k}={v}")
    return " ".join(parts)


def cmd_verify(args):
    return EXIT_OK if run_verify() else EXIT_FAIL


COMMANDS = {"oracle": cmd_oracle, "train": cmd_train, "compare": cmd_compare, "verify": cmd_verify}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return COMMANDS[args.command](args)
    except UsageError as exc:
        (exc.parser or parser).print_usage(sys.stderr)
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except LqrLabError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
