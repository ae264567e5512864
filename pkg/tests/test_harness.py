import json
import math
import re
import xml.etree.ElementTree as ET

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lqrlab.algorithms import COLUMNS, RunTrace, SsacHyper
from lqrlab.errors import ConfigError, ExperimentError, FitError
from lqrlab.harness.cli import main
from lqrlab.harness.config import bundled_config_path, load_config, parse_config
from lqrlab.harness.experiment import (
    aggregate_traces,
    budget_hypers,
    fit_rate,
    log_spaced_horizons,
    run_experiment,
)
from lqrlab.harness.output import (
    read_aggregate_csv,
    read_trace_csv,
    write_aggregate_csv,
    write_trace_csv,
)
from lqrlab.harness.plot import emit_svg_plot, render_svg

EX1 = bundled_config_path("example1.json")


def small_doc(**over):
    doc = json.loads(EX1.read_text())
    doc["ssac"] = {"T": 500}
    doc["seeds"] = [1, 2, 3]
    doc.update(over)
    return doc


# ---------------------------------------------------------------- config

def test_bundled_example1():
    cfg = load_config(EX1)
    hp = cfg.hyper
    assert cfg.algorithm == "ssac" and hp.T == 1_000_000
    assert (hp.c_alpha, hp.c_beta, hp.c_gamma) == (0.005, 0.01, 0.1)
    assert np.array_equal(cfg.system.D0, np.eye(2)) and cfg.system.sigma == 1.0
    assert cfg.stride_for("ssac") == 1000
    assert hp.omega_radius == 1e6 and hp.eta_radius == 1e6


def test_bundled_example2():
    cfg = load_config(bundled_config_path("example2.json"))
    zo = cfg.hypers["zeroth_order"]
    assert (zo.z, zo.l) == (20000, 50) and cfg.system.d == 4 and cfg.system.k == 3


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.pop("seeds"), "seeds"),
        (lambda d: d.update(seeds=[]), "seeds"),
        (lambda d: d.update(seeds=[1, -2]), r"seeds\[1\]"),
        (lambda d: d.update(algorithm="sarsa"), "algorithm"),
        (lambda d: d.pop("ssac"), "ssac"),
        (lambda d: d["ssac"].update(T="many"), r"ssac\.T"),
        (lambda d: d["ssac"].update(c_beta=-1), "ssac"),
        (lambda d: d["ssac"].update(bogus=1), r"ssac\.bogus"),
        (lambda d: d["system"].update(Q=[[1, 0], [0, -1]]), "system"),
        (lambda d: d.update(record_stride=0), "record_stride"),
        (lambda d: d.update(extra=1), "extra"),
        (lambda d: d["compare"].update(budget=-5), r"compare\.budget"),
    ],
)
def test_schema_errors_name_the_field(mutate, field):
    doc = small_doc()
    mutate(doc)
    with pytest.raises(ConfigError, match=field):
        parse_config(doc)


def test_parse_error_reports_line(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{\n  "seeds": [1,\n}')
    with pytest.raises(ConfigError, match=r"bad\.json:3:"):
        load_config(p)


def test_defaults_are_recorded():
    doc = small_doc()
    doc["system"].pop("sigma")
    cfg = parse_config(doc)
    assert cfg.defaulted == ("D0=I", "sigma=1")


def test_config_hash_tracks_every_field():
    base = parse_config(small_doc()).config_hash()
    assert parse_config(small_doc()).config_hash() == base
    variants = [
        small_doc(seeds=[1, 2, 4]),
        small_doc(record_stride=7),
        small_doc(name="other"),
    ]
    d = small_doc()
    d["ssac"]["c_beta"] = 0.02
    variants.append(d)
    d = small_doc()
    d["system"]["Q"] = [[9, 2], [2, 1.5]]
    variants.append(d)
    d = small_doc()
    d["compare"]["budget"] = 1000
    variants.append(d)
    hashes = {parse_config(v).config_hash() for v in variants}
    assert base not in hashes and len(hashes) == len(variants)


def test_budget_scaling():
    cfg = load_config(EX1)
    budget, hps = budget_hypers(cfg)
    assert budget == 200_000
    assert hps["ssac"].T == budget
    assert hps["zeroth_order"].J_outer * hps["zeroth_order"].samples_per_step == budget
    assert hps["double_loop"].J_outer * hps["double_loop"].T_inner == budget


# ---------------------------------------------------------------- rate fit

def test_fit_rate_exact_power_law():
    t = np.arange(1, 5001, dtype=float)
    assert fit_rate(t, t**-0.5) == pytest.approx(-0.5, abs=1e-9)
    assert fit_rate(t, np.full_like(t, 2.5)) == pytest.approx(0.0, abs=1e-9)


@given(st.floats(-2, 2), st.floats(0.1, 100))
def test_fit_rate_recovers_any_exponent(p, scale):
    t = np.geomspace(1, 1e5, 200)
    assert fit_rate(t, scale * t**p) == pytest.approx(p, abs=1e-8)


def test_fit_rate_errors():
    t = np.arange(1, 101, dtype=float)
    v = t**-0.5
    v[-1] = 0.0
    with pytest.raises(FitError):
        fit_rate(t, v)
    with pytest.raises(FitError):
        fit_rate(np.arange(1, 8.0), np.ones(7))


def test_log_spaced_horizons():
    h = log_spaced_horizons(1e4, 1e5, 10)
    assert h[0] == 10_000 and h[-1] == 100_000 and len(h) == 10


# ---------------------------------------------------------------- aggregation

def _trace(values, iters=None):
    values = np.asarray(values, dtype=float)
    iters = np.arange(values.size) if iters is None else np.asarray(iters)
    cols = {c: values.copy() for c in COLUMNS}
    cols["iter"] = iters.astype(np.int64)
    cols["samples"] = iters.astype(np.int64) + 1
    return RunTrace("ssac", cols)


@given(st.lists(st.lists(st.floats(-1e6, 1e6), min_size=4, max_size=4), min_size=2, max_size=6))
def test_aggregate_mean_is_exact(rows):
    traces = [_trace(r) for r in rows]
    agg = aggregate_traces(traces)
    assert np.array_equal(agg.mean["k_err"], np.mean(np.array(rows), axis=0))
    assert np.all(agg.lo["k_err"] <= agg.mean["k_err"]) and np.all(agg.mean["k_err"] <= agg.hi["k_err"])


def test_aggregate_interval_width():
    rows = np.array([[1.0, 2.0], [3.0, 6.0], [5.0, 7.0]])
    agg = aggregate_traces([_trace(r) for r in rows])
    half = 1.96 * rows.std(axis=0, ddof=1) / math.sqrt(3)
    assert np.allclose(agg.hi["actor_gap"] - agg.mean["actor_gap"], half)


def test_single_seed_has_no_interval():
    agg = aggregate_traces([_trace([1.0, 2.0])])
    assert np.array_equal(agg.mean["k_err"], [1.0, 2.0])
    assert np.all(np.isnan(agg.lo["k_err"])) and agg.n_seeds == 1


def test_all_nan_metric_is_dropped():
    t = _trace([1.0, 2.0])
    t.columns["y_sq"][:] = np.nan
    assert "y_sq" not in aggregate_traces([t]).mean


def test_run_experiment_one_seed_equals_trace():
    cfg = parse_config(small_doc(seeds=[5]))
    res = run_experiment(cfg)
    tr = res.traces[5]
    for c in ("actor_gap", "k_err", "A_T"):
        assert np.array_equal(res.aggregate.mean[c], tr[c])


def test_run_experiment_reports_divergence(capsys):
    doc = small_doc(seeds=[1, 2])
    doc["ssac"] = {"T": 2000, "c_alpha": 50.0, "c_beta": 50.0}
    with pytest.raises(ExperimentError) as info:
        run_experiment(parse_config(doc))
    assert set(info.value.result.failures) == {1, 2}
    assert "DIVERGED" in capsys.readouterr().err


def test_worker_pool_output_is_order_independent(monkeypatch):
    cfg = parse_config(small_doc())
    monkeypatch.setenv("LQRLAB_THREADS", "1")
    a = run_experiment(cfg)
    monkeypatch.setenv("LQRLAB_THREADS", "3")
    b = run_experiment(cfg)
    assert list(a.traces) == list(b.traces) == [1, 2, 3]
    for s in a.seeds:
        assert np.array_equal(a.traces[s].final_K, b.traces[s].final_K)
    assert np.array_equal(a.aggregate.mean["k_err"], b.aggregate.mean["k_err"])


# ---------------------------------------------------------------- CSV / SVG

def test_trace_csv_round_trip(tmp_path):
    cfg = parse_config(small_doc(seeds=[3]))
    tr = run_experiment(cfg).traces[3]
    path = write_trace_csv(tr, tmp_path / "t.csv", ["config_hash: x"])
    back = read_trace_csv(path)
    for c in COLUMNS:
        assert np.array_equal(back[c], tr[c], equal_nan=True)
    text = path.read_bytes()
    assert b"\r\n" not in text
    assert text.splitlines()[1].decode() == ",".join(COLUMNS)


def test_empty_trace_is_header_only(tmp_path):
    path = write_trace_csv(RunTrace("ssac"), tmp_path / "e.csv")
    assert path.read_text() == ",".join(COLUMNS) + "\n"


def test_aggregate_csv_round_trip(tmp_path):
    agg = aggregate_traces([_trace([1.0, 2.0, 4.0]), _trace([2.0, 2.5, 3.0])])
    path = write_aggregate_csv(agg, tmp_path / "a.csv")
    back = read_aggregate_csv(path)
    it, mean, lo, hi = back["k_err"]
    assert np.array_equal(it, agg.iters) and np.array_equal(mean, agg.mean["k_err"])
    assert np.array_equal(lo, agg.lo["k_err"]) and np.array_equal(hi, agg.hi["k_err"])


def test_svg_power_law_is_monotone_line(tmp_path):
    t = np.arange(1, 1001)
    agg = aggregate_traces([_trace(t**-0.5 * s, t - 1) for s in (0.9, 1.0, 1.1)])
    path = emit_svg_plot(agg, "k_err", tmp_path / "p.svg")
    root = ET.parse(path).getroot()
    ns = {"s": "http://www.w3.org/2000/svg"}
    d = root.find(".//s:path[@class='mean']", ns).get("d")
    pts = np.array([[float(a), float(b)] for a, b in re.findall(r"([\d.]+) ([\d.]+)", d)])
    assert np.all(np.diff(pts[:, 0]) > 0) and np.all(np.diff(pts[:, 1]) > 0)  # y grows downward in SVG
    slope = np.polyfit(pts[:, 0], pts[:, 1], 1)
    resid = pts[:, 1] - np.polyval(slope, pts[:, 0])
    assert np.max(np.abs(resid)) < 0.5
    assert root.find(".//s:polygon[@class='band']", ns) is not None


def test_svg_single_point_marker():
    svg = render_svg([{"label": "one", "x": [10.0], "mean": [0.5]}])
    root = ET.fromstring(svg)
    assert root.find(".//{http://www.w3.org/2000/svg}circle") is not None


def test_svg_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_svg_plot(None, "k_err", tmp_path / "x.svg")


# ---------------------------------------------------------------- CLI

def test_cli_missing_config_is_usage_error(tmp_path, capsys):
    assert main(["train", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_unknown_flag(capsys):
    assert main(["verify", "--frobnicate"]) == 2
    assert "usage" in capsys.readouterr().err


def test_cli_no_command():
    assert main([]) == 2


def test_cli_oracle_prints_report(capsys):
    assert main(["oracle", "--config", "example1", "--gain", "[[1,0],[0,1]]"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["J"] == pytest.approx(47.0) and np.allclose(rep["P_K"], [[10, 4], [4, 9]])


def test_cli_oracle_unstable_gain(capsys):
    assert main(["oracle", "--config", "example1", "--gain", "[[0,1],[1,0]]"]) == 1


def test_cli_oracle_bad_shape():
    assert main(["oracle", "--config", "example1", "--gain", "[[1,0,0]]"]) == 2


def test_cli_train_writes_outputs(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(small_doc()))
    out = tmp_path / "out"
    assert main(["train", "--config", str(cfg_path), "--seed", "2", "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["ssac_actor_gap.svg", "ssac_aggregate.csv", "ssac_seed2.csv"]
    head = (out / "ssac_seed2.csv").read_text().splitlines()[:6]
    assert head[0].startswith("# config_hash: ") and "seeds: 2" in head[2]
    assert "defaults applied: D0=I" in head[3]


def test_cli_train_is_byte_reproducible(tmp_path):
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(small_doc()))
    for name in ("a", "b"):
        assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / name)]) == 0
    for p in (tmp_path / "a").iterdir():
        assert p.read_bytes() == (tmp_path / "b" / p.name).read_bytes()


def test_cli_compare_small_budget(tmp_path):
    doc = small_doc()
    doc["compare"] = {"budget": 2000, "zeroth_order": {"z": 10, "l": 5, "eta": 1e-4},
                      "double_loop": {"T_inner": 500, "critic_init": "oracle", "eta": 0.001, "K0": [[1, 0], [0, 1]]}}
    cfg_path = tmp_path / "c.json"
    cfg_path.write_text(json.dumps(doc))
    out = tmp_path / "cmp"
    assert main(["compare", "--config", str(cfg_path), "--runs", "2", "--out", str(out)]) == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == [
        "comparison_k_err.svg",
        "double_loop_aggregate.csv",
        "final_gain_error.csv",
        "ssac_aggregate.csv",
        "zeroth_order_aggregate.csv",
    ]
    ET.parse(out / "comparison_k_err.svg")


def test_cli_compare_rejects_too_many_runs(tmp_path):
    assert main(["compare", "--config", "example1", "--runs", "11", "--out", str(tmp_path)]) == 2
