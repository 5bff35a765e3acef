"""Config-driven sweep orchestration, result persistence, and reporting.

A sweep is the cartesian product of (families x modes x levels x rule counts
x capacities x tasks x seeds). Every run's seeds are hashed from its
coordinates and a master seed, so adding runs never perturbs existing ones
and any record can be reproduced bit-exactly from its coordinates. Results
append to a JSONL file; aggregation is a pure function of its contents.
"""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass
from hashlib import sha256
from pathlib import Path

import numpy as np

from . import figures, oracles
from .metrics import (
    adaptation,
    alignment,
    collapse_avg,
    collapse_worst,
    hungarian,
    inverse_mutual_information,
    metric_report,
    ranking_votes,
)
from .models import LEVELS, build_model, make_config, param_count, reduce_level
from .rules import (
    FAMILIES,
    MODES,
    IN_DISTRIBUTION,
    Shift,
    default_shifts,
    sample_batch,
    sample_task,
)
from .training import DEFAULT_ITERATIONS, TrainConfig, evaluate, train


def hash64(text: str) -> int:
    return int.from_bytes(sha256(text.encode()).digest()[:8], "little")

RESULTS_NAME = "results.jsonl"

GATED_METRIC_LEVELS = ("modular", "modular_op", "gt_modular", "random_gate")


class ConfigError(ValueError):
    """Bad sweep configuration (unknown key or invalid value)."""


@dataclass
class SweepConfig:
    master_seed: int = 0
    families: tuple = ("mlp",)
    modes: tuple = ("classification",)
    levels: tuple = ("monolithic", "modular", "modular_op", "gt_modular")
    rule_counts: tuple = (2, 8)
    capacities: tuple = (16_000,)
    tasks_per_setting: int = 3
    seeds_per_task: int = 3
    shifts: str | tuple = "default"  # "default" = family-appropriate grid
    iterations: int | None = None  # None = per-family default
    batch_size: int = 256
    learning_rate: float = 1e-4
    rnn_clip_norm: float = 1.0
    eval_every: int | None = None  # None = iterations // 10
    eval_samples: int = 10_000
    metric_eval_samples: int = 10_000
    adaptation_draws: int = 100
    adaptation_samples: int = 10_000
    search_version: int = 1
    mha_dot_argmax: bool = False
    gate_hidden: int = 16
    jobs: int = 1

    @classmethod
    def from_dict(cls, data: dict) -> "SweepConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = {**data}
        for key in ("families", "modes", "levels", "rule_counts", "capacities"):
            if key in merged:
                merged[key] = tuple(merged[key])
        if isinstance(merged.get("shifts"), (list, tuple)):
            merged["shifts"] = tuple(
                Shift(variance_doubled=bool(s.get("variance_doubled", False)),
                      seq_len=s.get("seq_len"))
                for s in merged["shifts"]
            )
        cfg = cls(**merged)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path: str) -> "SweepConfig":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        return cls.from_dict(data)

    def validate(self):
        for name in ("families", "modes", "levels", "rule_counts", "capacities"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must be non-empty")
        bad = set(self.families) - set(FAMILIES)
        if bad:
            raise ConfigError(f"unknown families {sorted(bad)}")
        bad = set(self.modes) - set(MODES)
        if bad:
            raise ConfigError(f"unknown modes {sorted(bad)}")
        bad = set(self.levels) - set(LEVELS)
        if bad:
            raise ConfigError(f"unknown levels {sorted(bad)}")
        if any(r < 2 for r in self.rule_counts):
            raise ConfigError("rule_counts must all be >= 2")
        if any(c < 1 for c in self.capacities):
            raise ConfigError("capacities must be positive")
        if self.tasks_per_setting < 1 or self.seeds_per_task < 1:
            raise ConfigError("tasks_per_setting and seeds_per_task must be >= 1")
        if self.search_version not in (1, 2):
            raise ConfigError("search_version must be 1 or 2")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")

    def shift_list(self, family: str) -> list:
        if self.shifts == "default":
            return default_shifts(family)
        shifts = [s for s in self.shifts]
        for s in shifts:
            s.validate(family)
        return shifts


@dataclass(frozen=True)
class Coordinates:
    """Unique identity of one run within a sweep."""

    family: str
    mode: str
    level: str
    rules: int
    capacity: int
    task_index: int
    seed_index: int

    def key(self) -> str:
        return (f"{self.family}|{self.mode}|{self.level}|{self.rules}"
                f"|{self.capacity}|{self.task_index}|{self.seed_index}")


def _hash_seed(*parts) -> int:
    digest = sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def task_seed_for(master_seed: int, family: str, rules: int, task_index: int) -> int:
    """Tasks are shared across modes/levels/capacities/seeds by construction."""
    return _hash_seed("task", master_seed, family, rules, task_index)


def run_seed_for(master_seed: int, coords: Coordinates) -> int:
    return _hash_seed("run", master_seed, coords.key())


def expand_coordinates(cfg: SweepConfig) -> list[Coordinates]:
    coords = []
    for family in cfg.families:
        for mode in cfg.modes:
            for level in cfg.levels:
                for rules in cfg.rule_counts:
                    for capacity in cfg.capacities:
                        for task_index in range(cfg.tasks_per_setting):
                            for seed_index in range(cfg.seeds_per_task):
                                coords.append(Coordinates(family, mode, level, rules,
                                                          capacity, task_index,
                                                          seed_index))
    return coords


def _train_config(cfg: SweepConfig, coords: Coordinates) -> TrainConfig:
    iterations = cfg.iterations or DEFAULT_ITERATIONS[coords.family]
    eval_every = cfg.eval_every or max(1, iterations // 10)
    return TrainConfig(
        iterations=iterations,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        clip_norm=cfg.rnn_clip_norm if coords.family == "rnn" else None,
        mode=coords.mode,
        eval_every=eval_every,
        eval_samples=cfg.eval_samples,
        eval_shifts=tuple(cfg.shift_list(coords.family)),
    )


def run_single(cfg: SweepConfig, coords: Coordinates) -> dict:
    """Execute one run and return its record (never raises on divergence)."""
    t0 = time.time()
    t_seed = task_seed_for(cfg.master_seed, coords.family, coords.rules,
                           coords.task_index)
    r_seed = run_seed_for(cfg.master_seed, coords)
    task = sample_task(coords.family, coords.rules, t_seed,
                       search_version=cfg.search_version,
                       dot_argmax=cfg.mha_dot_argmax)
    model_cfg = make_config(coords.level, coords.family, coords.rules,
                            coords.capacity, search_version=cfg.search_version,
                            gate_hidden=cfg.gate_hidden)
    model = build_model(model_cfg, seed=r_seed)
    train_cfg = _train_config(cfg, coords)
    model, log = train(model, task, train_cfg, task_seed=t_seed)

    record = {
        **asdict(coords),
        "task_seed": t_seed,
        "run_seed": r_seed,
        "width": model_cfg.width,
        "param_count": param_count(model),
        "iterations": train_cfg.iterations,
        "status": log.status,
        "final": {},
        "metrics": None,
        "curve": log.checkpoints,
        "wall_clock_s": 0.0,
    }
    if log.status == "ok":
        stats = None
        for si, shift in enumerate(train_cfg.eval_shifts):
            samples = cfg.metric_eval_samples if shift == IN_DISTRIBUTION \
                else cfg.eval_samples
            perf, shift_stats = evaluate(model, task, shift, samples,
                                         (t_seed, 3, si), coords.mode)
            record["final"][shift.name] = perf
            if shift == IN_DISTRIBUTION:
                stats = shift_stats
        if coords.level in GATED_METRIC_LEVELS and stats is not None:
            adapt = adaptation(model, task, n_draws=cfg.adaptation_draws,
                               eval_samples=cfg.adaptation_samples, seed=r_seed)
            record["metrics"] = metric_report(stats, adaptation_score=adapt)
    record["wall_clock_s"] = time.time() - t0
    return record


def _worker(payload):
    cfg_dict, coords_dict = payload
    cfg = SweepConfig.from_dict(cfg_dict)
    return run_single(cfg, Coordinates(**coords_dict))


def load_records(results_path: str) -> list[dict]:
    records = []
    path = Path(results_path)
    if not path.exists():
        return records
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def _record_key(record: dict) -> str:
    return (f"{record['family']}|{record['mode']}|{record['level']}|{record['rules']}"
            f"|{record['capacity']}|{record['task_index']}|{record['seed_index']}")


def run_sweep(cfg: SweepConfig, out_dir: str, jobs: int | None = None,
              resume: bool = True) -> list[dict]:
    """Execute all configured runs, appending each record to results.jsonl.

    Completed coordinates (already in the results file) are skipped; failures
    of individual runs are recorded and do not stop the sweep.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / RESULTS_NAME
    existing = load_records(results_path) if resume else []
    done = {_record_key(r) for r in existing}
    pending = [c for c in expand_coordinates(cfg) if c.key() not in done]
    jobs = jobs or cfg.jobs
    records = list(existing)

    def emit(record):
        with open(results_path, "a") as fh:
            fh.write(json.dumps(record) + "\n")
        records.append(record)

    if jobs <= 1:
        for coords in pending:
            emit(run_single(cfg, coords))
    else:
        cfg_dict = asdict(cfg)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(_worker, (cfg_dict, asdict(c))) for c in pending]
            for fut in as_completed(futures):
                emit(fut.result())
    return records


# ---------------------------------------------------------------------------
# Aggregation and figure data
# ---------------------------------------------------------------------------

FIGURE_IDS = ("perf_vs_R", "metrics_vs_R", "metric_bars", "training_curve", "votes")

VOTE_COMPARISONS = {
    "full": ("gt_modular", "modular_op", "modular", "monolithic"),
    "modular_vs_monolithic": ("modular", "monolithic"),
}


def _ok(records):
    return [r for r in records if r.get("status") == "ok"]


def _mean_std(values):
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def plot_data(records: list[dict], figure_id: str) -> list[dict]:
    """Row dicts replicating one report figure's axes; shared by the CSV
    emitters and the figure renderers so the two always agree."""
    if figure_id not in FIGURE_IDS:
        raise ValueError(f"unknown figure id {figure_id!r}; known ids: {FIGURE_IDS}")
    records = _ok(records)
    rows = []
    if figure_id == "perf_vs_R":
        groups = {}
        for r in records:
            for shift, value in r["final"].items():
                key = (r["family"], r["mode"], r["rules"], r["level"], shift)
                groups.setdefault(key, []).append(value)
        for key in sorted(groups):
            family, mode, rules, level, shift = key
            mean, std = _mean_std(groups[key])
            rows.append({"family": family, "mode": mode, "R": rules, "level": level,
                         "shift": shift, "mean": mean, "std": std,
                         "n": len(groups[key])})
    elif figure_id in ("metrics_vs_R", "metric_bars"):
        groups = {}
        for r in records:
            if not r.get("metrics"):
                continue
            for metric, value in r["metrics"].items():
                key = (r["family"], r["mode"], r["rules"], r["level"], metric)
                groups.setdefault(key, []).append(value)
        if figure_id == "metric_bars":  # average over rule counts too
            collapsed = {}
            for (family, mode, rules, level, metric), vals in groups.items():
                collapsed.setdefault((family, mode, level, metric), []).extend(vals)
            for key in sorted(collapsed):
                family, mode, level, metric = key
                mean, std = _mean_std(collapsed[key])
                rows.append({"family": family, "mode": mode, "level": level,
                             "metric": metric, "mean": mean, "std": std,
                             "n": len(collapsed[key])})
        else:
            for key in sorted(groups):
                family, mode, rules, level, metric = key
                mean, std = _mean_std(groups[key])
                rows.append({"family": family, "mode": mode, "R": rules,
                             "level": level, "metric": metric, "mean": mean,
                             "std": std, "n": len(groups[key])})
    elif figure_id == "training_curve":
        groups = {}
        for r in records:
            for ckpt in r.get("curve", []):
                key = (r["family"], r["mode"], r["level"], ckpt["iter"])
                groups.setdefault(key, []).append(ckpt["train_loss"])
        for key in sorted(groups):
            family, mode, level, iteration = key
            mean, _ = _mean_std(groups[key])
            rows.append({"family": family, "mode": mode, "level": level,
                         "iter": iteration, "train_loss": mean,
                         "n": len(groups[key])})
    elif figure_id == "votes":
        shifts = sorted({s for r in records for s in r["final"]})
        for comparison, levels in VOTE_COMPARISONS.items():
            for shift in shifts:
                entries = [
                    ((r["family"], r["mode"], r["rules"], r["capacity"],
                      r["task_index"]), r["level"], r["final"][shift])
                    for r in records
                    if r["level"] in levels and shift in r["final"]
                ]
                if not entries:
                    continue
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    table = ranking_votes(entries, levels=levels)
                if table.groups == 0:
                    continue
                for level in levels:
                    rows.append({"comparison": comparison, "shift": shift,
                                 "level": level, "votes": table.votes[level],
                                 "ties": table.ties, "groups": table.groups})
    return rows


def _write_csv(rows: list[dict], path: Path):
    if not rows:
        path.write_text("")
        return
    header = list(rows[0].keys())
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)


def aggregate_report(records: list[dict], out_dir: str) -> dict:
    """Emit vote tables, performance/metric tables, and training-curve
    averages as CSVs, a text summary, and rendered figures."""
    if not records:
        raise ValueError("no records to aggregate")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    data = {fid: plot_data(records, fid) for fid in FIGURE_IDS}
    _write_csv(data["perf_vs_R"], out / "perf_vs_rules.csv")
    _write_csv(data["metrics_vs_R"], out / "metrics_vs_rules.csv")
    _write_csv(data["metric_bars"], out / "metric_bars.csv")
    _write_csv(data["training_curve"], out / "training_curves.csv")
    _write_csv(data["votes"], out / "votes.csv")

    figures.render_perf_vs_rules(data["perf_vs_R"], str(out / "perf_vs_rules.png"))
    figures.render_metrics_vs_rules(data["metrics_vs_R"],
                                    str(out / "metrics_vs_rules.png"))
    figures.render_metric_bars(data["metric_bars"], str(out / "metric_bars.png"))
    figures.render_training_curves(data["training_curve"],
                                   str(out / "training_curves.png"))
    figures.render_votes(data["votes"], str(out / "votes.png"))

    ok = _ok(records)
    lines = [
        f"runs: {len(records)} total, {len(ok)} ok, "
        f"{len(records) - len(ok)} failed/diverged",
    ]
    for row in data["votes"]:
        lines.append(
            f"votes[{row['comparison']}/{row['shift']}] {row['level']}: "
            f"{row['votes']} of {row['groups']} (ties {row['ties']})"
        )
    for row in data["perf_vs_R"]:
        if row["shift"] == "in_distribution":
            lines.append(
                f"perf {row['family']}/{row['mode']} R={row['R']} {row['level']}: "
                f"{row['mean']:.4f} +- {row['std']:.4f} (n={row['n']})"
            )
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return data


# ---------------------------------------------------------------------------
# Verification: the oracle suite
# ---------------------------------------------------------------------------


def _check_autodiff(rng):
    worst = 0.0
    for _ in range(30):
        params, forward = oracles.random_composite_graph(rng)
        ok, err = oracles.gradient_check(forward, params)
        worst = max(worst, err)
        if not ok:
            return False, f"gradient mismatch, relative error {err:.2e}"
    return True, f"30 graphs, worst relative error {worst:.2e}"


def _check_hungarian(rng):
    for R in range(2, 7):
        for _ in range(20):
            cost = rng.standard_normal((R, R))
            perm = hungarian(cost)
            val = float(cost[np.arange(R), perm].sum())
            _, best = oracles.brute_force_assignment(cost)
            if not math.isclose(val, best, rel_tol=0, abs_tol=1e-12):
                return False, f"R={R}: hungarian {val} != brute force {best}"
    return True, "matches brute force for R=2..6"

def _check_alignment(rng):
    for R in range(2, 7):
        for _ in range(20):
            A = rng.dirichlet(np.ones(R), size=R)
            ours = alignment(A)
            brute = oracles.brute_force_alignment(A)
            if ours != brute:
                return False, f"R={R}: alignment {ours} != brute force {brute}"
    return True, "equals exhaustive permutation search for R=2..6"


def _check_imi_identity(rng):
    worst = 0.0
    for R in (2, 3, 4, 6):
        for _ in range(20):
            joint = rng.dirichlet(np.ones(R * R)).reshape(R, R)
            a = inverse_mutual_information(joint)
            b = oracles.imi_from_entropies(joint)
            worst = max(worst, abs(a - b))
    return worst < 1e-12, f"worst entropy-identity gap {worst:.2e}"


def _check_analytic_cases(rng):
    for R in (2, 3, 4, 8):
        perm = rng.permutation(R)
        A = np.zeros((R, R))
        A[np.arange(R), perm] = 1.0
        if abs(alignment(A)) > 1e-12:
            return False, f"permutation matrix alignment != 0 at R={R}"
        if abs(inverse_mutual_information(A / R)) > 1e-12:
            return False, f"permutation joint IMI != 0 at R={R}"
        marginal = A.mean(axis=0)
        if abs(collapse_avg(marginal, R)) > 1e-12 or abs(collapse_worst(marginal, R)) > 1e-12:
            return False, f"permutation marginal collapse != 0 at R={R}"
        U = np.full((R, R), 1.0 / R)
        if abs(alignment(U) - (R - 1) / R) > 1e-12:
            return False, f"uniform matrix alignment != (R-1)/R at R={R}"
        if abs(inverse_mutual_information(U / R) - 1.0) > 1e-12:
            return False, f"uniform joint IMI != 1 at R={R}"
        dead = np.full(R, 1.0 / (R - 1))
        dead[0] = 0.0
        if collapse_worst(dead, R) != 1.0:
            return False, f"zero-entry marginal C_W != 1 at R={R}"
    return True, "permutation, uniform, and dead-module cases exact"


def _check_data_laws(rng):
    task = sample_task("mlp", 4, 123)
    batch = sample_batch(task, 100_000, "regression", Shift(variance_doubled=True),
                         (9, 9))
    var = float(batch.inputs.var())
    if abs(var - 2.0) > 0.04:
        return False, f"doubled variance off: {var:.4f}"
    counts = np.bincount(batch.rule_ids, minlength=4) / len(batch)
    # "within 1%" = one percentage point; a relative bound is unattainable at
    # this sample size once R grows
    if np.abs(counts - 0.25).max() > 0.01:
        return False, f"rule histogram off: {counts}"
    mtask = sample_task("mha", 3, 5, search_version=2)
    mb = sample_batch(mtask, 2_000, "regression", IN_DISTRIBUTION, (1, 2))
    norms = np.linalg.norm(mb.inputs[:, :, :, 0:2], axis=-1)
    if np.abs(norms - 1.0).max() > 1e-12:
        return False, "query sphere norms not 1"
    entries = []
    for seed in range(8):
        t = sample_task("rnn", 64, seed)
        entries.append(t.transition.reshape(-1))
    std = float(np.concatenate(entries).std())
    want = 32 ** -0.25
    if abs(std - want) / want > 0.01:
        return False, f"transition std {std:.5f} != {want:.5f}"
    return True, "variance, uniformity, sphere norms, parameter moments ok"


def _check_gt_modular_metrics(rng):
    # per-token family: 1e4 samples give 1e5 activation records, so the
    # sampling floor of the collapse metrics sits well below the bound
    task = sample_task("rnn", 4, 7)
    model = build_model(make_config("gt_modular", "rnn", 4, 12_000), seed=3)
    _, stats = evaluate(model, task, IN_DISTRIBUTION, 10_000, (7, 3, 0), "regression")
    report = metric_report(stats)
    bad = {k: v for k, v in report.items() if v >= 0.02}
    if bad:
        return False, f"gt metrics not near 0: {bad}"
    adapt = adaptation(model, task, n_draws=20, eval_samples=4_000, seed=11)
    if adapt >= 0.05:
        return False, f"gt adaptation {adapt:.4f} >= 0.05"
    return True, f"all collapse/specialization metrics < 0.02, adaptation {adapt:.4f}"


def _check_random_gate(rng):
    task = sample_task("mlp", 4, 8)
    model = build_model(make_config("random_gate", "mlp", 4, 8_000), seed=4)
    _, stats = evaluate(model, task, IN_DISTRIBUTION, 100_000, (8, 3, 0), "regression")
    marginal = stats.marginal()
    ca = collapse_avg(marginal, 4)
    cw = collapse_worst(marginal, 4)
    imi = inverse_mutual_information(stats.joint_distribution())
    sd = alignment(stats.activation_matrix())
    ok = ca < 0.05 and cw < 0.1 and imi > 0.95 and abs(sd - 0.75) < 0.05
    return ok, f"C_A={ca:.4f} C_W={cw:.4f} S_IMI={imi:.4f} s_d={sd:.4f}"


def _check_reductions(rng):
    for R in (2, 4):
        task = sample_task("mlp", R, 20 + R)
        gt = build_model(make_config("gt_modular", "mlp", R, 8_000), seed=5)
        chain = [gt]
        while chain[-1].config.level != "monolithic":
            chain.append(reduce_level(chain[-1]))
        batch = sample_batch(task, 1_000, "regression", IN_DISTRIBUTION, (30, R))
        preds = [m.forward(batch).predictions_array() for m in chain]
        for a, b in zip(preds, preds[1:]):
            if np.abs(a - b).max() >= 1e-6:
                return False, f"adjacent reduction differs by {np.abs(a - b).max():.2e}"
        if np.abs(preds[0] - preds[-1]).max() >= 1e-5:
            return False, "chained reduction differs from source"
    return True, "witness chain output gaps < 1e-6 at R=2,4"


def _check_determinism(rng):
    cfg = SweepConfig(rule_counts=(2,), levels=("modular",), capacities=(4_000,),
                      tasks_per_setting=1, seeds_per_task=1, iterations=40,
                      eval_samples=500, metric_eval_samples=500,
                      adaptation_draws=2, adaptation_samples=500)
    coords = expand_coordinates(cfg)[0]
    a = run_single(cfg, coords)
    b = run_single(cfg, coords)
    for key in ("final", "metrics", "curve"):
        if a[key] != b[key]:
            return False, f"rerun differs in {key}"
    return True, "re-executed run is bit-identical"


VERIFY_CHECKS = {
    "autodiff_gradient_check": _check_autodiff,
    "hungarian_vs_brute_force": _check_hungarian,
    "alignment_vs_brute_force": _check_alignment,
    "imi_entropy_identity": _check_imi_identity,
    "analytic_metric_cases": _check_analytic_cases,
    "data_law_moments": _check_data_laws,
    "gt_modular_live_metrics": _check_gt_modular_metrics,
    "random_gate_baseline": _check_random_gate,
    "containment_witnesses": _check_reductions,
    "run_determinism": _check_determinism,
}


def verify(check_names=None) -> list[tuple[str, bool, str]]:
    """Run the oracle suite; prints one PASS/FAIL line per check.

    Side-effect free: touches no files. Returns (name, passed, detail) per
    check.
    """
    results = []
    names = check_names or list(VERIFY_CHECKS)
    for name in names:
        rng = np.random.default_rng(np.random.SeedSequence([0xC0FFEE, hash64(name)]))
        try:
            passed, detail = VERIFY_CHECKS[name](rng)
        except Exception as exc:  # a crash is a failure, not an abort
            passed, detail = False, f"raised {type(exc).__name__}: {exc}"
        results.append((name, passed, detail))
        print(f"{'PASS' if passed else 'FAIL'} {name}: {detail}")
    return results
