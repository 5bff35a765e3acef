import math

import numpy as np
import pytest

from modbench import oracles
from modbench.metrics import (
    ActivationStats,
    MetricError,
    adaptation,
    alignment,
    collapse_avg,
    collapse_worst,
    hungarian,
    inverse_mutual_information,
    metric_report,
    ranking_votes,
)
from modbench.rules import sample_task


def _stats_from_matrix(A, counts_per_rule=10):
    R = A.shape[0]
    stats = ActivationStats(R)
    for r in range(R):
        stats.update(np.tile(A[r], (counts_per_rule, 1)), np.full(counts_per_rule, r))
    return stats


def test_marginal_basics():
    R = 4
    onehot = np.eye(R)
    stats = _stats_from_matrix(onehot)
    assert np.allclose(stats.marginal(), 0.25)
    assert np.allclose(stats.joint.sum(axis=1), stats.rule_counts, atol=1e-6)

    stats2 = ActivationStats(R)
    p = np.zeros((12, R))
    p[:, 0] = 1.0
    stats2.update(p, np.random.default_rng(0).integers(0, R, 12))
    assert np.allclose(stats2.marginal(), [1, 0, 0, 0])


def test_marginal_empty_rejected():
    with pytest.raises(MetricError, match="empty"):
        ActivationStats(3).marginal()


def test_activation_matrix_requires_all_rules():
    stats = ActivationStats(3)
    stats.update(np.ones((4, 3)) / 3, np.zeros(4, dtype=int))
    with pytest.raises(MetricError, match="rules"):
        stats.activation_matrix()


def test_collapse_avg_cases():
    assert collapse_avg(np.full(4, 0.25), 4) == 0.0
    assert collapse_avg(np.array([1.0, 0.0]), 2) == 1.0
    got = collapse_avg(np.array([0.4, 0.3, 0.3, 0.0]), 4)
    assert abs(got - 1.0 / 3.0) < 1e-12
    with pytest.raises(MetricError):
        collapse_avg(np.array([1.0]), 1)


def test_collapse_worst_cases():
    assert collapse_worst(np.full(3, 1 / 3), 3) == 0.0
    dead = np.array([0.5, 0.5, 0.0])
    assert collapse_worst(dead, 3) == 1.0
    got = collapse_worst(np.array([0.4, 0.3, 0.2, 0.1]), 4)
    assert abs(got - 0.6) < 1e-12


def test_alignment_permutation_is_zero():
    rng = np.random.default_rng(0)
    for R in (2, 3, 5):
        P = np.zeros((R, R))
        P[np.arange(R), rng.permutation(R)] = 1.0
        assert alignment(P) == 0.0


def test_alignment_uniform_closed_form():
    for R in (2, 3, 4, 5, 6):
        A = np.full((R, R), 1.0 / R)
        got = alignment(A)
        assert abs(got - (R - 1) / R) < 1e-12
        assert abs(oracles.brute_force_alignment(A) - got) < 1e-12


def test_alignment_matches_bruteforce_random():
    rng = np.random.default_rng(4)
    for R in range(2, 7):
        for _ in range(15):
            A = rng.dirichlet(np.ones(R), size=R)
            assert alignment(A) == oracles.brute_force_alignment(A)


def test_alignment_rejects_bad_input():
    with pytest.raises(MetricError, match="square"):
        alignment(np.ones((2, 3)) / 3)
    with pytest.raises(MetricError, match="row"):
        alignment(np.array([[0.5, 0.2], [0.5, 0.5]]))


def test_hungarian_diagonal_and_trace_cases():
    cost = np.full((4, 4), 5.0)
    np.fill_diagonal(cost, 0.0)
    assert np.array_equal(hungarian(cost), np.arange(4))
    assert np.array_equal(hungarian(-np.eye(4)), np.arange(4))


def test_hungarian_matches_bruteforce_100_random():
    rng = np.random.default_rng(6)
    for _ in range(100):
        cost = rng.standard_normal((6, 6))
        perm = hungarian(cost)
        assert sorted(perm) == list(range(6))
        got = cost[np.arange(6), perm].sum()
        _, want = oracles.brute_force_assignment(cost)
        assert math.isclose(got, want, abs_tol=1e-12)


def test_hungarian_rejects_nonfinite():
    with pytest.raises(MetricError):
        hungarian(np.array([[1.0, np.inf], [0.0, 1.0]]))


def test_imi_permutation_and_independent():
    for R in (2, 4, 6):
        P = np.zeros((R, R))
        P[np.arange(R), np.random.default_rng(R).permutation(R)] = 1.0
        assert abs(inverse_mutual_information(P / R)) < 1e-12
        U = np.full((R, R), 1.0 / R ** 2)
        assert abs(inverse_mutual_information(U) - 1.0) < 1e-12


def test_imi_mixed_joint_matches_oracle():
    R = 4
    perm = np.zeros((R, R))
    perm[np.arange(R), [2, 0, 3, 1]] = 1.0
    joint = 0.9 * perm / R + 0.1 * np.full((R, R), 1.0 / R ** 2)
    got = inverse_mutual_information(joint)
    want = oracles.imi_from_entropies(joint)
    assert abs(got - want) < 1e-12
    assert 0.0 < got < 1.0


def test_imi_entropy_identity_random():
    rng = np.random.default_rng(10)
    for R in (2, 3, 5):
        for _ in range(20):
            joint = rng.dirichlet(np.ones(R * R)).reshape(R, R)
            assert abs(inverse_mutual_information(joint)
                       - oracles.imi_from_entropies(joint)) < 1e-12


def test_imi_rejects_bad_input():
    with pytest.raises(MetricError):
        inverse_mutual_information(np.array([[1.0]]))
    with pytest.raises(MetricError):
        inverse_mutual_information(np.ones((3, 3)))


def test_metrics_invariant_under_module_relabeling():
    rng = np.random.default_rng(3)
    R = 5
    A = rng.dirichlet(np.ones(R), size=R)
    counts = rng.integers(50, 100, size=R)
    joint = A * counts[:, None]
    total = joint.sum()
    perm = rng.permutation(R)
    joint_p = joint[:, perm]
    assert abs(alignment(A) - alignment(A[:, perm])) < 1e-12
    assert abs(inverse_mutual_information(joint / total)
               - inverse_mutual_information(joint_p / total)) < 1e-12
    marg = joint.sum(axis=0) / total
    assert abs(collapse_avg(marg, R) - collapse_avg(marg[perm], R)) < 1e-12
    assert abs(collapse_worst(marg, R) - collapse_worst(marg[perm], R)) < 1e-12


def test_alignment_zero_iff_permutation():
    rng = np.random.default_rng(9)
    R = 4
    P = np.zeros((R, R))
    P[np.arange(R), rng.permutation(R)] = 1.0
    assert alignment(P) < 1e-9
    A = rng.dirichlet(np.ones(R), size=R)
    if alignment(A) < 1e-9:  # astronomically unlikely
        assert np.allclose(np.sort(A, axis=1)[:, :-1], 0.0, atol=1e-9)


def test_adaptation_with_callable_oracles():
    R = 4
    # gate that always activates module 0
    always0 = lambda p, n, rng: np.eye(R)[0]
    got = adaptation(always0, sample_task("mlp", R, 0), n_draws=400, seed=3)
    want = oracles.simulate_adaptation(
        lambda p: np.eye(R)[0], R, n_draws=400, seed=99)
    assert abs(got - want) < 0.03

    # uniform-random gate: q == uniform exactly in expectation
    uniform = lambda p, n, rng: np.full(R, 1.0 / R)
    got_u = adaptation(uniform, sample_task("mlp", R, 0), n_draws=400, seed=4)
    want_u = oracles.simulate_adaptation(
        lambda p: np.full(R, 1.0 / R), R, n_draws=400, seed=123)
    assert abs(got_u - want_u) < 0.03

    # a perfectly tracking gate adapts exactly
    tracking = lambda p, n, rng: p
    assert adaptation(tracking, sample_task("mlp", R, 0), n_draws=50, seed=5) < 1e-12


def test_adaptation_rejects_monolithic():
    from modbench.models import ModelConfig, build_model

    model = build_model(ModelConfig(level="monolithic", family="mlp", rules=2,
                                    width=8), seed=0)
    with pytest.raises(MetricError, match="monolithic"):
        adaptation(model, sample_task("mlp", 2, 0), n_draws=1, eval_samples=10)


def test_ranking_votes_dominant_and_totals():
    rows = []
    for task in range(5):
        for level, perf in (("gt_modular", 0.1), ("modular_op", 0.2),
                            ("modular", 0.3), ("monolithic", 0.4)):
            for seed in range(3):
                rows.append((("mlp", "regression", 4, 1000, task), level,
                             perf + 0.01 * seed))
    table = ranking_votes(rows)
    assert table.votes["gt_modular"] == 5
    assert table.total_votes == table.groups == 5
    assert table.ties == 0


def test_ranking_votes_tie_rule_and_restricted():
    rows = [
        (("g",), "modular", 0.5), (("g",), "monolithic", 0.5),
    ]
    table = ranking_votes(rows, levels=("modular", "monolithic"))
    assert table.ties == 1
    assert table.votes["modular"] == 1  # tie goes to the earlier tie-order level
    assert table.votes["monolithic"] == 0


def test_ranking_votes_incomplete_group_skipped():
    rows = [
        (("a",), "modular", 0.2), (("a",), "monolithic", 0.4),
        (("b",), "modular", 0.2),  # missing monolithic
    ]
    with pytest.warns(UserWarning, match="incomplete"):
        table = ranking_votes(rows, levels=("modular", "monolithic"))
    assert table.groups == 1
    assert table.skipped == 1
    assert table.total_votes == 1


def test_activation_matrix_csv_dump():
    import io

    from modbench.metrics import dump_activation_matrix

    stats = _stats_from_matrix(np.eye(3))
    buf = io.StringIO()
    dump_activation_matrix(stats, buf)
    lines = buf.getvalue().strip().split("\n")
    assert lines[0] == "module_0,module_1,module_2"
    assert len(lines) == 4
    got = np.array([[float(x) for x in line.split(",")] for line in lines[1:]])
    assert np.array_equal(got, np.eye(3))


def test_metric_report_keys_and_ranges():
    R = 4
    A = np.eye(R)
    stats = _stats_from_matrix(A)
    report = metric_report(stats, adaptation_score=0.01)
    assert set(report) == {"collapse_avg", "collapse_worst", "alignment",
                           "inverse_mutual_info", "adaptation"}
    for key, value in report.items():
        hi = 2.0 if key == "adaptation" else 1.0
        assert 0.0 <= value <= hi
