"""CSV emission and parse-back for traces and aggregates."""

import csv
import io
import math
from pathlib import Path

import numpy as np

from ..algorithms import COLUMNS, RunTrace
from ..algorithms.trace import INT_COLUMNS

AGGREGATE_HEADER = ("iter", "metric", "mean", "lo95", "hi95")


def fmt(value):
    """Shortest text that parses back to the identical float."""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return "nan"
    return repr(value)


def header_lines(cfg, seeds, algorithm, extra=()):
    defaults = ", ".join(cfg.defaulted) if cfg.defaulted else "none"
    lines = [
        f"config_hash: {cfg.config_hash()}",
        f"algorithm: {algorithm}",
        f"seeds: {' '.join(str(s) for s in seeds)}",
        f"defaults applied: {defaults}",
        f"sigma: {fmt(cfg.system.sigma)}",
    ]
    return lines + list(extra)


def write_rows(path, comments, header, rows):
    """CSV with ``# `` comment lines, LF endings, RFC-4180 quoting."""
    buf = io.StringIO()
    for line in comments:
        buf.write(f"# {line}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
    return path


def write_trace_csv(trace, path, comments=()):
    rows = []
    for i in range(len(trace)):
        row = []
        for name in COLUMNS:
            v = trace[name][i]
            row.append(str(int(v)) if name in INT_COLUMNS else fmt(v))
        rows.append(row)
    return write_rows(path, comments, COLUMNS, rows)


def write_aggregate_csv(aggregate, path, comments=()):
    rows = []
    if aggregate is not None:
        for i, it in enumerate(aggregate.iters):
            for name in aggregate.metrics:
                lo, hi = aggregate.lo[name][i], aggregate.hi[name][i]
                rows.append([
                    str(int(it)),
                    name,
                    fmt(aggregate.mean[name][i]),
                    "" if math.isnan(lo) else fmt(lo),
                    "" if math.isnan(hi) else fmt(hi),
                ])
    return write_rows(path, comments, AGGREGATE_HEADER, rows)


def _read(path):
    comments, lines = [], []
    with open(path, newline="") as fh:
        for line in fh:
            if line.startswith("#"):
                comments.append(line[1:].strip())
            else:
                lines.append(line)
    reader = csv.reader(lines)
    header = next(reader, None)
    return comments, header, list(reader)


def _float(text):
    return float("nan") if text == "" else float(text)


def read_trace_csv(path, algorithm="?"):
    """Parse a trace CSV back into a :class:`RunTrace` (final state fields unset)."""
    comments, header, rows = _read(path)
    if header is None or tuple(header) != COLUMNS:
        raise ValueError(f"{path}: unexpected header {header}")
    cols = {}
    for j, name in enumerate(COLUMNS):
        if name in INT_COLUMNS:
            cols[name] = np.array([int(r[j]) for r in rows], dtype=np.int64)
        else:
            cols[name] = np.array([_float(r[j]) for r in rows], dtype=float)
    trace = RunTrace(algorithm, cols)
    trace.warnings = comments
    return trace


def read_aggregate_csv(path):
    """Return ``{metric: (iters, mean, lo, hi)}``."""
    _, header, rows = _read(path)
    if header is None or tuple(header) != AGGREGATE_HEADER:
        raise ValueError(f"{path}: unexpected header {header}")
    out = {}
    for r in rows:
        it, name = int(r[0]), r[1]
        out.setdefault(name, ([], [], [], []))
        for lst, v in zip(out[name], (it, _float(r[2]), _float(r[3]), _float(r[4]))):
            lst.append(v)
    return {k: tuple(np.array(x) for x in v) for k, v in out.items()}


def emit_csv(result, cfg, out_dir, prefix=None):
    """Per-seed trace CSVs plus the aggregate CSV of one experiment; returns written paths."""
    out_dir = Path(out_dir)
    prefix = prefix or result.algorithm
    paths = []
    for seed in result.seeds:
        trace = result.traces.get(seed)
        status = "diverged" if seed in result.failures else "ok"
        extra = [f"seed: {seed}", f"status: {status}"]
        if seed in result.failures:
            extra.append(f"failure: {result.failures[seed]}")
        if trace is None:
            trace = RunTrace(result.algorithm)
        comments = header_lines(cfg, result.seeds, result.algorithm, extra)
        paths.append(write_trace_csv(trace, out_dir / f"{prefix}_seed{seed}.csv", comments))
    extra = [f"aggregated seeds: {' '.join(str(s) for s in result.ok_seeds) or 'none'}"]
    if result.failures:
        extra.append(f"excluded (diverged): {' '.join(str(s) for s in result.failures)}")
    comments = header_lines(cfg, result.seeds, result.algorithm, extra)
    paths.append(write_aggregate_csv(result.aggregate, out_dir / f"{prefix}_aggregate.csv", comments))
    return paths
