"""Independent reference implementations used to cross-check the main code paths.

Everything here is deliberately written the slow, obvious way (explicit loops,
exhaustive enumeration, finite differences) and shares no code with the
implementations it checks.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .tensor import Parameter, Tape, apply_op, zero_gradients


def finite_difference_gradients(forward, params, eps: float = 1e-5):
    """Central-difference gradients of a scalar-valued forward() wrt params.

    forward() must re-run the full computation from the current parameter
    values and return a float.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p.values)
        flat = p.values.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            hi = forward()
            flat[i] = orig - eps
            lo = forward()
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * eps)
        grads.append(g)
    return grads


def gradient_check(forward, params, rel_tol: float = 1e-4, abs_tol: float = 1e-6,
                   eps: float = 1e-5):
    """Compare tape gradients against central differences.

    Returns (ok, worst_relative_error). Entries whose analytic and numeric
    gradients are both below abs_tol are accepted outright.
    """
    zero_gradients(params)
    with Tape() as tape:
        loss = forward()
    tape.backward(loss)
    analytic = [p.grad.copy() for p in params]

    def scalar_forward():
        return float(forward().values)

    numeric = finite_difference_gradients(scalar_forward, params, eps=eps)
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), abs_tol)
        rel = np.abs(a - n) / denom
        small = (np.abs(a) < abs_tol) & (np.abs(n) < abs_tol)
        rel[small] = 0.0
        worst = max(worst, float(rel.max()) if rel.size else 0.0)
    return worst < rel_tol, worst


def random_composite_graph(rng: np.random.Generator, max_depth: int = 5,
                           max_width: int = 16):
    """Build a random differentiable graph over the primitive set.

    Returns (params, forward) where forward() recomputes a scalar loss from
    the current parameter values. Inputs are drawn from N(0, 1); values near
    relu/abs kinks are nudged away so finite differences stay valid.
    """
    depth = int(rng.integers(2, max_depth + 1))
    rows = int(rng.integers(2, 7))
    cols = int(rng.integers(2, min(8, max_width) + 1))

    def draw(shape):
        x = rng.standard_normal(shape)
        # keep clear of non-differentiable points probed by +-eps steps
        x[np.abs(x) < 1e-3] += 2e-3
        return x

    params = [Parameter(draw((rows, cols)), name="x0")]
    plan = []  # (kind, aux) applied in order
    width = cols
    unaries = ["tanh", "sigmoid", "relu", "abs", "exp", "softmax-over-last-axis"]
    for d in range(depth):
        choice = rng.choice(["unary", "matmul", "add", "mul", "scale"])
        if choice == "unary":
            kind = str(rng.choice(unaries))
            if kind == "exp":
                # keep exp's argument bounded so finite differences stay exact
                plan.append(("tanh", None))
            plan.append((kind, None))
        elif choice == "matmul":
            nxt = int(rng.integers(2, 7))
            # fan-in scaling keeps values from exploding through deep chains
            params.append(Parameter(draw((width, nxt)) / np.sqrt(width), name=f"w{d}"))
            plan.append(("matmul", len(params) - 1))
            width = nxt
        elif choice == "add":
            params.append(Parameter(draw((rows, width)), name=f"a{d}"))
            plan.append(("add", len(params) - 1))
        elif choice == "mul":
            params.append(Parameter(draw((rows, width)), name=f"m{d}"))
            plan.append(("elementwise-multiply", len(params) - 1))
        else:
            plan.append(("scalar-scale", float(rng.uniform(0.5, 1.5))))

    def forward():
        t = params[0]
        for kind, aux in plan:
            if kind == "matmul":
                t = apply_op(kind, t, params[aux])
            elif kind in ("add", "elementwise-multiply"):
                t = apply_op(kind, t, params[aux])
            elif kind == "scalar-scale":
                t = apply_op(kind, t, aux)
            else:
                t = apply_op(kind, t)
        return apply_op("mean", apply_op("elementwise-multiply", t, t))

    return params, forward


def brute_force_alignment(A: np.ndarray) -> float:
    """min over permutation matrices P of sum|A - P| / (2R), by enumeration."""
    A = np.asarray(A, dtype=np.float64)
    R = A.shape[0]
    best = math.inf
    for perm in itertools.permutations(range(R)):
        P = np.zeros((R, R))
        P[np.arange(R), perm] = 1.0
        best = min(best, float(np.abs(A - P).sum()) / (2.0 * R))
    return best


def brute_force_assignment(cost: np.ndarray):
    """Minimum-cost assignment by exhaustive permutation search."""
    cost = np.asarray(cost, dtype=np.float64)
    R = cost.shape[0]
    best_perm, best_val = None, math.inf
    for perm in itertools.permutations(range(R)):
        val = float(cost[np.arange(R), perm].sum())
        if val < best_val:
            best_val, best_perm = val, perm
    return np.asarray(best_perm, dtype=np.int64), best_val


def entropy(p: np.ndarray) -> float:
    """Shannon entropy in nats with the 0*log(0)=0 convention."""
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def imi_from_entropies(joint: np.ndarray) -> float:
    """Inverse mutual information via H(m) + H(r) - H(m, r)."""
    joint = np.asarray(joint, dtype=np.float64)
    R = joint.shape[0]
    pm = joint.sum(axis=0)
    pr = joint.sum(axis=1)
    mi = entropy(pm) + entropy(pr) - entropy(joint)
    return 1.0 - mi / math.log(R)


def mlp_label_direct(alpha, beta, x1, x2, c) -> float:
    return float(alpha[c]) * float(x1) + float(beta[c]) * float(x2)


def mha_label_bruteforce(task, tokens: np.ndarray, rule_ids: np.ndarray) -> np.ndarray:
    """Per-token labels by looping over every candidate pair (one sample)."""
    qd = task.query_dim
    N = tokens.shape[0]
    out = np.zeros(N)
    for n in range(N):
        c = int(rule_ids[n])
        q = tokens[:, c, 0:qd]
        qp = tokens[:, c, qd : 2 * qd]
        v = tokens[:, c, 2 * qd]
        vp = tokens[:, c, 2 * qd + 1]

        def closest(queries):
            best_i, best_d = None, math.inf
            for i in range(N):
                if i == n:
                    continue
                if task.search_version == 1:
                    d = abs(float(queries[n, 0]) - float(queries[i, 0]))
                elif task.dot_argmax:
                    d = -float(queries[n] @ queries[i])
                else:
                    d = float(queries[n] @ queries[i])
                if d < best_d:
                    best_i, best_d = i, d
            return best_i

        s = closest(q)
        sp = closest(qp)
        out[n] = task.coef1[c] * v[s] + task.coef2[c] * vp[sp]
    return out


def rnn_label_recursion(task, x: np.ndarray, rule_ids: np.ndarray) -> np.ndarray:
    """Per-step labels by an explicit scalar-loop recursion (one sample)."""
    N, dim = x.shape
    s = np.zeros(dim)
    out = np.zeros(N)
    for n in range(N):
        c = int(rule_ids[n])
        s_next = np.zeros(dim)
        for i in range(dim):
            acc = 0.0
            for j in range(dim):
                acc += task.transition[c][i][j] * s[j]
                acc += task.input_map[c][i][j] * x[n][j]
            s_next[i] = acc
        s = s_next
        out[n] = sum(task.readout[i] * s[i] for i in range(dim))
    return out


def adam_single_step_expected(value: np.ndarray, grad: np.ndarray, lr: float,
                              beta1: float = 0.9, beta2: float = 0.999,
                              eps: float = 1e-8) -> np.ndarray:
    """Closed-form first Adam update from zeroed state."""
    m = (1 - beta1) * grad
    v = (1 - beta2) * grad ** 2
    m_hat = m / (1 - beta1)
    v_hat = v / (1 - beta2)
    return value - lr * m_hat / (np.sqrt(v_hat) + eps)


def simulate_adaptation(module_marginal, R: int, n_draws: int, seed: int,
                        alpha: float = 1.0) -> float:
    """Monte-carlo reference for the adaptation score of a fixed gating law.

    module_marginal(p) must return the module usage distribution produced
    when rules are drawn from p (exact, no sampling noise).
    """
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_draws):
        p = rng.dirichlet(np.full(R, alpha))
        q = np.asarray(module_marginal(p), dtype=np.float64)
        total += float(np.abs(np.sort(p) - np.sort(q)).sum())
    return total / n_draws
