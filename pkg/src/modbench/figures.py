"""Matplotlib rendering of report tables to image files.

Every renderer takes the row dicts produced by `harness.plot_data` so the
numbers in the figures always match the CSVs exactly.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

LEVEL_COLORS = {
    "gt_modular": "tab:blue",
    "modular_op": "tab:orange",
    "modular": "tab:green",
    "monolithic": "tab:red",
    "random_gate": "tab:gray",
}

LEVEL_LABELS = {
    "gt_modular": "GT-Modular",
    "modular_op": "Modular-op",
    "modular": "Modular",
    "monolithic": "Monolithic",
    "random_gate": "Random gate",
}


def _level_sorted(levels):
    order = list(LEVEL_COLORS)
    return sorted(levels, key=lambda lv: order.index(lv) if lv in order else 99)


def render_perf_vs_rules(rows, path: str):
    """One panel per (family, mode, shift); performance vs rule count per level."""
    panels = sorted({(r["family"], r["mode"], r["shift"]) for r in rows})
    if not panels:
        return
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.4),
                             squeeze=False)
    for ax, panel in zip(axes[0], panels):
        fam, mode, shift = panel
        sub = [r for r in rows if (r["family"], r["mode"], r["shift"]) == panel]
        for level in _level_sorted({r["level"] for r in sub}):
            pts = sorted((r["R"], r["mean"], r["std"]) for r in sub if r["level"] == level)
            xs = [p[0] for p in pts]
            ys = [p[1] for p in pts]
            es = [p[2] for p in pts]
            ax.errorbar(xs, ys, yerr=es, marker="o", capsize=2,
                        color=LEVEL_COLORS.get(level),
                        label=LEVEL_LABELS.get(level, level))
        ax.set_xscale("log", base=2)
        ax.set_xlabel("rules")
        ax.set_ylabel("error" if mode == "classification" else "loss")
        ax.set_title(f"{fam} {mode}\n{shift}")
        ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_metrics_vs_rules(rows, path: str):
    """One panel per metric; metric value vs rule count per level."""
    metrics = sorted({r["metric"] for r in rows})
    if not metrics:
        return
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.6 * len(metrics), 3.2),
                             squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        sub = [r for r in rows if r["metric"] == metric]
        for level in _level_sorted({r["level"] for r in sub}):
            pts = sorted((r["R"], r["mean"]) for r in sub if r["level"] == level)
            ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o",
                    color=LEVEL_COLORS.get(level),
                    label=LEVEL_LABELS.get(level, level))
        ax.set_xscale("log", base=2)
        ax.set_xlabel("rules")
        ax.set_title(metric)
        ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_votes(rows, path: str):
    """Pie chart per (comparison, shift) of win counts."""
    panels = sorted({(r["comparison"], r["shift"]) for r in rows})
    if not panels:
        return
    fig, axes = plt.subplots(1, len(panels), figsize=(3.6 * len(panels), 3.6),
                             squeeze=False)
    for ax, panel in zip(axes[0], panels):
        comparison, shift = panel
        sub = [r for r in rows if (r["comparison"], r["shift"]) == panel and r["votes"] > 0]
        if not sub:
            ax.axis("off")
            continue
        sub.sort(key=lambda r: r["level"])
        ax.pie([r["votes"] for r in sub],
               labels=[LEVEL_LABELS.get(r["level"], r["level"]) for r in sub],
               colors=[LEVEL_COLORS.get(r["level"]) for r in sub],
               autopct="%d%%", textprops={"fontsize": 8})
        ax.set_title(f"{comparison}\n{shift}", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_training_curves(rows, path: str):
    """Mean train loss per checkpoint, one line per level."""
    panels = sorted({(r["family"], r["mode"]) for r in rows})
    if not panels:
        return
    fig, axes = plt.subplots(1, len(panels), figsize=(4.2 * len(panels), 3.2),
                             squeeze=False)
    for ax, panel in zip(axes[0], panels):
        fam, mode = panel
        sub = [r for r in rows if (r["family"], r["mode"]) == panel]
        for level in _level_sorted({r["level"] for r in sub}):
            pts = sorted((r["iter"], r["train_loss"]) for r in sub if r["level"] == level)
            ax.plot([p[0] for p in pts], [p[1] for p in pts],
                    color=LEVEL_COLORS.get(level),
                    label=LEVEL_LABELS.get(level, level))
        ax.set_xlabel("iteration")
        ax.set_ylabel("train loss")
        ax.set_title(f"{fam} {mode}")
        ax.grid(alpha=0.3)
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_metric_bars(rows, path: str):
    """Bar chart per metric averaged over rule counts, one bar per level."""
    metrics = sorted({r["metric"] for r in rows})
    if not metrics:
        return
    fig, axes = plt.subplots(1, len(metrics), figsize=(3.2 * len(metrics), 3.2),
                             squeeze=False)
    for ax, metric in zip(axes[0], metrics):
        sub = [r for r in rows if r["metric"] == metric]
        levels = _level_sorted({r["level"] for r in sub})
        means = [next(r["mean"] for r in sub if r["level"] == lv) for lv in levels]
        ax.bar(range(len(levels)), means,
               color=[LEVEL_COLORS.get(lv) for lv in levels])
        ax.set_xticks(range(len(levels)))
        ax.set_xticklabels([LEVEL_LABELS.get(lv, lv) for lv in levels],
                           rotation=30, ha="right", fontsize=8)
        ax.set_title(metric)
        ax.grid(alpha=0.3, axis="y")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
