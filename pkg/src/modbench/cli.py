"""Command-line entry point.

Verbs: run (one coordinate), sweep (full grid), report (aggregate a results
file), plot (figure data CSV + rendered image), verify (oracle suite).
Exit codes: 0 success, 1 verification failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import figures
from .harness import (
    FIGURE_IDS,
    ConfigError,
    Coordinates,
    SweepConfig,
    aggregate_report,
    load_records,
    plot_data,
    run_single,
    run_sweep,
    verify,
)


def _emit_record(record: dict, out_dir: str):
    import json

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "results.jsonl", "a") as fh:
        fh.write(json.dumps(record) + "\n")


def _load_config(path: str | None) -> SweepConfig:
    return SweepConfig.from_json(path) if path else SweepConfig()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="modbench",
        description="Train and score modular-architecture benchmarks on "
                    "rule-based synthetic tasks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute one run and append its record")
    p_run.add_argument("--config", help="sweep config JSON (defaults apply otherwise)")
    p_run.add_argument("--out", required=True, help="output directory")
    p_run.add_argument("--family", required=True, choices=("mlp", "mha", "rnn"))
    p_run.add_argument("--mode", required=True,
                       choices=("regression", "classification"))
    p_run.add_argument("--level", required=True,
                       choices=("monolithic", "modular", "modular_op",
                                "gt_modular", "random_gate"))
    p_run.add_argument("--rules", required=True, type=int)
    p_run.add_argument("--capacity", required=True, type=int)
    p_run.add_argument("--task-index", type=int, default=0)
    p_run.add_argument("--seed-index", type=int, default=0)

    p_sweep = sub.add_parser("sweep", help="execute the configured grid")
    p_sweep.add_argument("--config", help="sweep config JSON")
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--jobs", type=int, default=None,
                         help="parallel workers (default: config value)")
    p_sweep.add_argument("--resume", action="store_true", default=True,
                         help="skip coordinates already in the results file "
                              "(default on)")

    p_report = sub.add_parser("report", help="aggregate a results file")
    p_report.add_argument("--results", required=True, help="results.jsonl path")
    p_report.add_argument("--out", required=True, help="report directory")

    p_plot = sub.add_parser("plot", help="emit one figure's data CSV and image")
    p_plot.add_argument("--results", required=True, help="results.jsonl path")
    p_plot.add_argument("--figure", required=True, help=f"one of {FIGURE_IDS}")
    p_plot.add_argument("--out", required=True, help="output directory")

    sub.add_parser("verify", help="run the oracle verification suite")

    args = parser.parse_args(argv)

    try:
        if args.command == "verify":
            results = verify()
            failures = [name for name, ok, _ in results if not ok]
            print(f"{len(results) - len(failures)}/{len(results)} checks passed")
            return 1 if failures else 0

        if args.command == "run":
            cfg = _load_config(args.config)
            coords = Coordinates(args.family, args.mode, args.level, args.rules,
                                 args.capacity, args.task_index, args.seed_index)
            record = run_single(cfg, coords)
            _emit_record(record, args.out)
            print(f"{coords.key()}: {record['status']} final={record['final']}")
            return 0

        if args.command == "sweep":
            cfg = _load_config(args.config)
            records = run_sweep(cfg, args.out, jobs=args.jobs, resume=args.resume)
            ok = sum(1 for r in records if r["status"] == "ok")
            print(f"{len(records)} records ({ok} ok) in {args.out}/results.jsonl")
            return 0

        if args.command == "report":
            records = load_records(args.results)
            if not records:
                print(f"no records found at {args.results}", file=sys.stderr)
                return 2
            aggregate_report(records, args.out)
            print(f"report written to {args.out}")
            return 0

        if args.command == "plot":
            records = load_records(args.results)
            if not records:
                print(f"no records found at {args.results}", file=sys.stderr)
                return 2
            try:
                rows = plot_data(records, args.figure)
            except ValueError as exc:
                print(str(exc), file=sys.stderr)
                return 2
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            from .harness import _write_csv

            _write_csv(rows, out / f"{args.figure}.csv")
            renderer = {
                "perf_vs_R": figures.render_perf_vs_rules,
                "metrics_vs_R": figures.render_metrics_vs_rules,
                "metric_bars": figures.render_metric_bars,
                "training_curve": figures.render_training_curves,
                "votes": figures.render_votes,
            }[args.figure]
            renderer(rows, str(out / f"{args.figure}.png"))
            print(f"wrote {out / args.figure}.csv and .png")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
