import json
import os
from pathlib import Path

import numpy as np
import pytest

from modbench import metrics as metrics_mod
from modbench.cli import main as cli_main
from modbench.harness import (
    ConfigError,
    Coordinates,
    SweepConfig,
    VERIFY_CHECKS,
    aggregate_report,
    expand_coordinates,
    load_records,
    plot_data,
    run_single,
    run_sweep,
    task_seed_for,
    verify,
)
from modbench.metrics import ranking_votes


def _tiny_config(**kw):
    base = dict(
        families=("mlp",),
        modes=("regression",),
        levels=("modular", "monolithic"),
        rule_counts=(2,),
        capacities=(3_000,),
        tasks_per_setting=1,
        seeds_per_task=2,
        iterations=12,
        eval_every=12,
        eval_samples=100,
        metric_eval_samples=200,
        adaptation_draws=2,
        adaptation_samples=100,
    )
    base.update(kw)
    return SweepConfig(**base)


def test_expand_cardinality_is_axis_product():
    cfg = _tiny_config(
        families=("mlp", "rnn"),
        modes=("regression",),
        levels=("modular", "monolithic"),
        rule_counts=(2, 4),
        capacities=(3_000,),
        tasks_per_setting=1,
        seeds_per_task=2,
    )
    coords = expand_coordinates(cfg)
    assert len(coords) == 2 * 1 * 2 * 2 * 1 * 1 * 2
    assert len({c.key() for c in coords}) == len(coords)


def test_task_seed_shared_across_levels_and_modes():
    a = task_seed_for(0, "mlp", 4, 1)
    b = task_seed_for(0, "mlp", 4, 1)
    assert a == b
    assert task_seed_for(0, "mlp", 4, 2) != a
    assert task_seed_for(1, "mlp", 4, 1) != a


def test_clipping_configured_for_rnn_only():
    from modbench.harness import _train_config

    cfg = _tiny_config(families=("mlp", "rnn", "mha"))
    for family, want in (("mlp", None), ("mha", None), ("rnn", 1.0)):
        coords = Coordinates(family, "regression", "modular", 2, 3_000, 0, 0)
        assert _train_config(cfg, coords).clip_norm == want


def test_run_single_record_fields_and_metrics_presence():
    cfg = _tiny_config()
    rec_mod = run_single(cfg, Coordinates("mlp", "regression", "modular", 2,
                                          3_000, 0, 0))
    rec_mono = run_single(cfg, Coordinates("mlp", "regression", "monolithic", 2,
                                           3_000, 0, 0))
    for rec in (rec_mod, rec_mono):
        assert rec["status"] == "ok"
        assert {"family", "mode", "level", "rules", "capacity", "task_index",
                "seed_index", "task_seed", "run_seed", "final", "metrics",
                "curve", "wall_clock_s", "width", "param_count",
                "iterations"} <= set(rec)
        assert "in_distribution" in rec["final"]
        assert "variance_doubled" in rec["final"]
    assert rec_mono["metrics"] is None
    assert set(rec_mod["metrics"]) == {"collapse_avg", "collapse_worst",
                                       "alignment", "inverse_mutual_info",
                                       "adaptation"}


def test_run_record_reproducible(tmp_path):
    cfg = _tiny_config()
    coords = Coordinates("mlp", "regression", "modular", 2, 3_000, 0, 1)
    a = run_single(cfg, coords)
    b = run_single(cfg, coords)
    assert a["final"] == b["final"]
    assert a["metrics"] == b["metrics"]
    assert a["curve"] == b["curve"]


def test_sweep_writes_appends_and_resumes(tmp_path):
    cfg = _tiny_config()
    out = tmp_path / "sweep"
    records = run_sweep(cfg, str(out), jobs=1)
    assert len(records) == 4
    path = out / "results.jsonl"
    first = path.read_text()
    assert len(first.strip().split("\n")) == 4

    # rerun: nothing new executed, file unchanged
    records2 = run_sweep(cfg, str(out), jobs=1)
    assert len(records2) == 4
    assert path.read_text() == first

    # adding a seed only appends the new coordinate
    cfg3 = _tiny_config(seeds_per_task=3)
    records3 = run_sweep(cfg3, str(out), jobs=1)
    assert len(records3) == 6
    assert path.read_text().startswith(first)


def _strip_volatile(rec):
    rec = dict(rec)
    rec.pop("wall_clock_s")
    return json.dumps(rec, sort_keys=True)


def test_sweep_parallel_matches_serial(tmp_path):
    cfg = _tiny_config()
    serial = run_sweep(cfg, str(tmp_path / "serial"), jobs=1)
    parallel = run_sweep(cfg, str(tmp_path / "parallel"), jobs=2)
    assert {_strip_volatile(r) for r in serial} == \
        {_strip_volatile(r) for r in parallel}


def test_sweep_config_validation_and_unknown_keys():
    with pytest.raises(ConfigError, match="unknown config keys"):
        SweepConfig.from_dict({"familes": ["mlp"]})
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({"rule_counts": [1]})
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({"levels": ["mystery"]})
    with pytest.raises(ConfigError):
        SweepConfig.from_dict({"families": []})
    cfg = SweepConfig.from_dict({"shifts": [{"variance_doubled": True}],
                                 "families": ["rnn"]})
    assert cfg.shift_list("rnn")[0].variance_doubled


def test_sweep_config_json_roundtrip(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"families": ["mlp"], "rule_counts": [2, 4]}))
    cfg = SweepConfig.from_json(str(path))
    assert cfg.rule_counts == (2, 4)
    path.write_text("not json")
    with pytest.raises(ConfigError):
        SweepConfig.from_json(str(path))


@pytest.fixture(scope="module")
def small_records(tmp_path_factory):
    cfg = _tiny_config(levels=("gt_modular", "modular", "monolithic"),
                       seeds_per_task=2)
    out = tmp_path_factory.mktemp("agg")
    return cfg, run_sweep(cfg, str(out), jobs=1)


def test_aggregate_report_outputs(small_records, tmp_path):
    _, records = small_records
    out = tmp_path / "report"
    data = aggregate_report(records, str(out))
    for name in ("perf_vs_rules.csv", "metrics_vs_rules.csv", "votes.csv",
                 "training_curves.csv", "metric_bars.csv", "summary.txt",
                 "perf_vs_rules.png", "metrics_vs_rules.png", "votes.png",
                 "training_curves.png", "metric_bars.png"):
        assert (out / name).exists(), name
    header = (out / "perf_vs_rules.csv").read_text().splitlines()[0]
    assert header == "family,mode,R,level,shift,mean,std,n"
    assert data["perf_vs_R"]


def test_aggregate_single_record_equals_its_values(tmp_path):
    cfg = _tiny_config(levels=("modular",), seeds_per_task=1)
    rec = run_single(cfg, Coordinates("mlp", "regression", "modular", 2,
                                      3_000, 0, 0))
    rows = plot_data([rec], "perf_vs_R")
    for row in rows:
        assert row["mean"] == rec["final"][row["shift"]]
        assert row["std"] == 0.0
        assert row["n"] == 1
    mrows = plot_data([rec], "metrics_vs_R")
    for row in mrows:
        assert row["mean"] == rec["metrics"][row["metric"]]


def test_plot_data_perf_schema_and_series_count(small_records):
    _, records = small_records
    rows = plot_data(records, "perf_vs_R")
    assert rows, "no rows"
    for row in rows:
        assert {"R", "level", "shift", "mean", "std"} <= set(row)
    levels = {r["level"] for r in rows}
    shifts = {r["shift"] for r in rows}
    series = {(r["level"], r["shift"]) for r in rows}
    assert len(series) == len(levels) * len(shifts)


def test_plot_data_mean_matches_independent_average(small_records):
    _, records = small_records
    rows = plot_data(records, "perf_vs_R")
    ok = [r for r in records if r["status"] == "ok"]
    for row in rows:
        vals = [r["final"][row["shift"]] for r in ok
                if r["level"] == row["level"] and r["rules"] == row["R"]]
        assert abs(row["mean"] - sum(vals) / len(vals)) < 1e-12


def test_plot_data_votes_match_ranking_votes(small_records):
    _, records = small_records
    rows = plot_data(records, "votes")
    full = [r for r in rows if r["comparison"] == "full"
            and r["shift"] == "in_distribution"]
    if full:  # full comparison requires all four levels present
        assert sum(r["votes"] for r in full) == full[0]["groups"]
    sub = [r for r in rows if r["comparison"] == "modular_vs_monolithic"
           and r["shift"] == "in_distribution"]
    entries = [((r["family"], r["mode"], r["rules"], r["capacity"],
                 r["task_index"]), r["level"], r["final"]["in_distribution"])
               for r in records if r["level"] in ("modular", "monolithic")]
    table = ranking_votes(entries, levels=("modular", "monolithic"))
    got = {r["level"]: r["votes"] for r in sub}
    assert got == table.votes


def test_plot_data_unknown_figure_lists_known_ids(small_records):
    _, records = small_records
    with pytest.raises(ValueError, match="perf_vs_R"):
        plot_data(records, "nope")


def test_verify_passes_and_is_side_effect_free(tmp_path):
    cwd_before = sorted(os.listdir("."))
    results = verify(check_names=["analytic_metric_cases",
                                  "imi_entropy_identity"])
    assert all(ok for _, ok, _ in results)
    assert sorted(os.listdir(".")) == cwd_before


def test_verify_catches_corrupted_hungarian(monkeypatch):
    import modbench.harness as harness_mod

    real = metrics_mod.hungarian

    def off_by_one(cost):
        perm = real(cost)
        return np.roll(perm, 1)  # deliberately wrong assignment

    monkeypatch.setattr(harness_mod, "hungarian", off_by_one)
    results = verify(check_names=["hungarian_vs_brute_force"])
    assert not results[0][1]


def test_verify_registry_covers_required_checks():
    required = {"autodiff_gradient_check", "hungarian_vs_brute_force",
                "alignment_vs_brute_force", "imi_entropy_identity",
                "analytic_metric_cases", "data_law_moments",
                "gt_modular_live_metrics", "random_gate_baseline",
                "containment_witnesses", "run_determinism"}
    assert required <= set(VERIFY_CHECKS)


def test_cli_run_and_report_and_plot(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "iterations": 10, "eval_every": 10, "eval_samples": 50,
        "metric_eval_samples": 100, "adaptation_draws": 1,
        "adaptation_samples": 50,
    }))
    out = tmp_path / "runs"
    rc = cli_main(["run", "--config", str(cfg_path), "--out", str(out),
                   "--family", "mlp", "--mode", "regression",
                   "--level", "modular", "--rules", "2", "--capacity", "3000"])
    assert rc == 0
    results = out / "results.jsonl"
    assert results.exists()
    rc = cli_main(["report", "--results", str(results),
                   "--out", str(tmp_path / "report")])
    assert rc == 0
    assert (tmp_path / "report" / "summary.txt").exists()
    rc = cli_main(["plot", "--results", str(results), "--figure", "perf_vs_R",
                   "--out", str(tmp_path / "plots")])
    assert rc == 0
    assert (tmp_path / "plots" / "perf_vs_R.csv").exists()
    assert (tmp_path / "plots" / "perf_vs_R.png").exists()


def test_cli_exit_codes(tmp_path):
    bad_cfg = tmp_path / "bad.json"
    bad_cfg.write_text(json.dumps({"mystery_knob": 3}))
    rc = cli_main(["sweep", "--config", str(bad_cfg), "--out", str(tmp_path / "x")])
    assert rc == 2
    rc = cli_main(["plot", "--results", str(tmp_path / "missing.jsonl"),
                   "--figure", "perf_vs_R", "--out", str(tmp_path / "y")])
    assert rc == 2


def test_cli_sweep_smoke(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({
        "levels": ["gt_modular"], "rule_counts": [2], "capacities": [3000],
        "tasks_per_setting": 1, "seeds_per_task": 1,
        "iterations": 8, "eval_every": 8, "eval_samples": 50,
        "metric_eval_samples": 100, "adaptation_draws": 1,
        "adaptation_samples": 50,
    }))
    rc = cli_main(["sweep", "--config", str(cfg_path),
                   "--out", str(tmp_path / "out")])
    assert rc == 0
    records = load_records(tmp_path / "out" / "results.jsonl")
    assert len(records) == 1
    assert records[0]["status"] == "ok"
