"""Collapse and specialization metrics for gated modular systems.

All metrics read from accumulated (rule, module-activation) statistics under
equiprobable rules, except the adaptation score which perturbs the rule
distribution with Dirichlet draws. Activations are accumulated as
probabilities (expected activation); an argmax variant is available behind
the `hard` flag of ActivationStats.update for sensitivity checks.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .rules import IN_DISTRIBUTION, sample_batch

LEVEL_TIE_ORDER = ("gt_modular", "modular_op", "modular", "monolithic", "random_gate")


class MetricError(ValueError):
    """Invalid input to a metric computation."""


class ActivationStats:
    """Joint accumulation of module activation mass per ground-truth rule.

    joint[r, m] sums the activation probability of module m over all decision
    points whose true rule is r; rule_counts[r] counts those decision points.
    """

    def __init__(self, rules: int):
        self.rules = rules
        self.joint = np.zeros((rules, rules))
        self.rule_counts = np.zeros(rules)

    def update(self, activations: np.ndarray, rule_ids: np.ndarray, hard: bool = False):
        p = np.asarray(activations, dtype=np.float64)
        if p.ndim != 2 or p.shape[1] != self.rules:
            raise MetricError(f"activations must be (n, {self.rules}), got {p.shape}")
        ids = np.asarray(rule_ids, dtype=np.int64).reshape(-1)
        if ids.shape[0] != p.shape[0]:
            raise MetricError("activations and rule_ids disagree on record count")
        if hard:
            onehot = np.zeros_like(p)
            onehot[np.arange(p.shape[0]), p.argmax(axis=1)] = 1.0
            p = onehot
        np.add.at(self.joint, ids, p)
        np.add.at(self.rule_counts, ids, 1.0)

    @property
    def total_records(self) -> float:
        return float(self.rule_counts.sum())

    def marginal(self) -> np.ndarray:
        """Module usage distribution p(m)."""
        total = self.total_records
        if total <= 0:
            raise MetricError("marginal of empty activation stats")
        return self.joint.sum(axis=0) / total

    def joint_distribution(self) -> np.ndarray:
        """Normalized joint p(r, m)."""
        total = self.total_records
        if total <= 0:
            raise MetricError("joint distribution of empty activation stats")
        return self.joint / total

    def activation_matrix(self) -> np.ndarray:
        """Row-stochastic A with A[r, m] = p(module m | rule r)."""
        if np.any(self.rule_counts <= 0):
            missing = np.flatnonzero(self.rule_counts <= 0).tolist()
            raise MetricError(f"no records for rules {missing}; cannot normalize rows")
        return self.joint / self.rule_counts[:, None]


def _check_simplex(p: np.ndarray, what: str, tol: float = 1e-6):
    if np.any(p < -tol) or abs(float(p.sum()) - 1.0) > tol:
        raise MetricError(f"{what} is not a probability distribution: {p}")


def collapse_avg(marginal: np.ndarray, rules: int) -> float:
    """Total under-use across modules, normalized to [0, 1]."""
    if rules < 2:
        raise MetricError(f"collapse_avg needs >= 2 rules, got {rules}")
    p = np.asarray(marginal, dtype=np.float64)
    _check_simplex(p, "module marginal")
    return rules / (rules - 1.0) * float(np.maximum(0.0, 1.0 / rules - p).sum())


def collapse_worst(marginal: np.ndarray, rules: int) -> float:
    """Under-use of the least used module, in [0, 1]."""
    if rules < 1:
        raise MetricError(f"collapse_worst needs >= 1 rule, got {rules}")
    p = np.asarray(marginal, dtype=np.float64)
    _check_simplex(p, "module marginal")
    return 1.0 - rules * float(p.min())


def hungarian(cost: np.ndarray) -> np.ndarray:
    """Minimum-cost assignment over a square matrix in O(n^3).

    Returns perm with perm[row] = assigned column. Shortest augmenting path
    formulation with row/column potentials.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or cost.shape[0] != cost.shape[1]:
        raise MetricError(f"cost must be square, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise MetricError("cost matrix contains non-finite entries")
    n = cost.shape[0]
    INF = math.inf
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[col] = row (1-based), 0 = free
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, INF)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            delta, j1 = INF, -1
            for j in range(1, n + 1):
                if used[j]:
                    continue
                cur = cost[i0 - 1, j - 1] - u[i0] - v[j]
                if cur < minv[j]:
                    minv[j] = cur
                    way[j] = j0
                if minv[j] < delta:
                    delta = minv[j]
                    j1 = j
            for j in range(n + 1):
                if used[j]:
                    u[match[j]] += delta
                    v[j] -= delta
                else:
                    minv[j] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    perm = np.zeros(n, dtype=np.int64)
    for j in range(1, n + 1):
        perm[match[j] - 1] = j - 1
    return perm


def alignment(A: np.ndarray) -> float:
    """Normalized L1 distance from the activation matrix to the closest
    permutation matrix: min_P sum|A - P| / (2R), in [0, 1].

    Minimizing the distance is equivalent to a maximum-trace assignment,
    solved with the Hungarian algorithm instead of enumerating R! matrices.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise MetricError(f"activation matrix must be square, got shape {A.shape}")
    for r in range(A.shape[0]):
        _check_simplex(A[r], f"activation matrix row {r}")
    perm = hungarian(-A)
    R = A.shape[0]
    P = np.zeros_like(A)
    P[np.arange(R), perm] = 1.0
    return float(np.abs(A - P).sum()) / (2.0 * R)


def inverse_mutual_information(joint: np.ndarray) -> float:
    """1 - MI(module; rule)/log R from the normalized joint, in [0, 1]."""
    j = np.asarray(joint, dtype=np.float64)
    if j.ndim != 2 or j.shape[0] != j.shape[1]:
        raise MetricError(f"joint must be square, got shape {j.shape}")
    R = j.shape[0]
    if R < 2:
        raise MetricError(f"inverse mutual information needs >= 2 rules, got {R}")
    if abs(float(j.sum()) - 1.0) > 1e-6 or np.any(j < -1e-12):
        raise MetricError("joint is not a probability distribution")
    pr = j.sum(axis=1)
    pm = j.sum(axis=0)
    mask = j > 0
    ratio = j[mask] / (pr[:, None] * pm[None, :])[mask]
    mi = float((j[mask] * np.log(ratio)).sum())
    return 1.0 - mi / math.log(R)


def adaptation(gate, task, n_draws: int = 100, dirichlet_alpha: float = 1.0,
               eval_samples: int = 10_000, seed: int = 0) -> float:
    """Mean sorted-L1 gap between perturbed rule distributions and the module
    usage they induce. Evaluation-only: no retraining between draws.

    `gate` is either a trained modular-level model or a callable oracle
    (rule_probs, n_samples, rng) -> module marginal.
    """
    if n_draws < 1:
        raise MetricError("adaptation needs at least one draw")
    if not callable(gate):
        if getattr(gate.config, "level", None) == "monolithic":
            raise MetricError("adaptation is undefined for monolithic models")
        model = gate

        def gate(rule_probs, n_samples, rng):
            stats = ActivationStats(task.rules)
            chunk_cap = 256 if task.family == "mha" else 4096
            remaining = n_samples
            while remaining > 0:
                chunk = min(remaining, chunk_cap)
                batch = sample_batch(task, chunk, "regression", IN_DISTRIBUTION,
                                     tuple(int(x) for x in rng.integers(0, 2**31, size=3)),
                                     rule_probs=rule_probs)
                out = model.forward(batch)
                stats.update(out.activations, out.activation_rule_ids)
                remaining -= chunk
            return stats.marginal()

    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    rules = task.rules
    total = 0.0
    for _ in range(n_draws):
        p = rng.dirichlet(np.full(rules, dirichlet_alpha))
        q = np.asarray(gate(p, eval_samples, rng), dtype=np.float64)
        total += float(np.abs(np.sort(p) - np.sort(q)).sum())
    return total / n_draws


@dataclass
class VoteTable:
    """Win counts per model level over comparison groups."""

    levels: tuple
    votes: dict = field(default_factory=dict)
    ties: int = 0
    groups: int = 0
    skipped: int = 0

    @property
    def total_votes(self) -> int:
        return sum(self.votes.values())


def ranking_votes(rows, levels=("gt_modular", "modular_op", "modular", "monolithic")) -> VoteTable:
    """One vote per comparison group to the level with the best seed-averaged
    performance (lower is better).

    rows: iterable of (group_key, level, performance). Groups missing any
    compared level, or with unequal seed counts, are skipped with a warning.
    Exact ties go to the earliest level in LEVEL_TIE_ORDER and are counted.
    """
    levels = tuple(levels)
    grouped: dict = {}
    for key, level, value in rows:
        grouped.setdefault(key, {}).setdefault(level, []).append(float(value))
    table = VoteTable(levels=levels, votes={lv: 0 for lv in levels})
    for key, by_level in sorted(grouped.items()):
        runs = [by_level.get(lv, []) for lv in levels]
        if any(len(r) == 0 for r in runs) or len({len(r) for r in runs}) != 1:
            warnings.warn(f"vote group {key} incomplete; skipped")
            table.skipped += 1
            continue
        means = {lv: float(np.mean(by_level[lv])) for lv in levels}
        best = min(means.values())
        winners = [lv for lv in levels if means[lv] == best]
        if len(winners) > 1:
            table.ties += 1
            winners.sort(key=LEVEL_TIE_ORDER.index)
        table.votes[winners[0]] += 1
        table.groups += 1
    return table


METRIC_RANGES = {
    "collapse_avg": (0.0, 1.0),
    "collapse_worst": (0.0, 1.0),
    "alignment": (0.0, 1.0),
    "inverse_mutual_info": (0.0, 1.0),
    "adaptation": (0.0, 2.0),
}


def dump_activation_matrix(stats: ActivationStats, fh):
    """CSV dump of the activation matrix: one row per rule, one column per
    module, '.' decimal separator."""
    A = stats.activation_matrix()
    fh.write(",".join(f"module_{m}" for m in range(stats.rules)) + "\n")
    for row in A:
        fh.write(",".join(repr(float(v)) for v in row) + "\n")


def metric_report(stats: ActivationStats, adaptation_score: float | None = None) -> dict:
    """Flat metric dict from accumulated stats, clamped to documented ranges."""
    marginal = stats.marginal()
    values = {
        "collapse_avg": collapse_avg(marginal, stats.rules),
        "collapse_worst": collapse_worst(marginal, stats.rules),
        "alignment": alignment(stats.activation_matrix()),
        "inverse_mutual_info": inverse_mutual_information(stats.joint_distribution()),
    }
    if adaptation_score is not None:
        values["adaptation"] = adaptation_score
    for name, value in values.items():
        lo, hi = METRIC_RANGES[name]
        if value < lo - 1e-9 or value > hi + 1e-9:
            raise MetricError(f"{name}={value} outside documented range [{lo}, {hi}]")
        values[name] = min(max(value, lo), hi)
    return values
