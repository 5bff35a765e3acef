"""Synthetic rule-based task sampling and batch generation.

A task is a frozen random parameter set defining R "rules"; a batch draws
fresh inputs, picks one rule per decision point, and labels each point with
that rule's ground truth. Three input families are supported:

* mlp: two scalars, label = rule-specific linear combination.
* mha: a token sequence where each rule defines two nearest-query searches,
  two value retrievals, and a linear combination of the retrieved values.
* rnn: a switching linear dynamical system read out by a fixed vector.

Every sampler is a pure function of its seed so the infinite data stream is
reproducible without storing anything.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

FAMILIES = ("mlp", "mha", "rnn")
MODES = ("regression", "classification")

RNN_STATE_DIM = 32
DEFAULT_SEQ_LEN = 10
SEQ_LEN_CHOICES = (3, 5, 10, 20, 30)


class TaskError(ValueError):
    """Invalid family/shift/parameter combination."""


def _rng(*entropy) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


def batch_seed(task_seed: int, iteration: int) -> tuple:
    """Seed material for the training stream: one fresh batch per iteration."""
    return (task_seed, 0, iteration)


def eval_seed(task_seed: int, shift_index: int, checkpoint: int) -> tuple:
    """Seed material for held-out evaluation batches, disjoint from training."""
    return (task_seed, 1, shift_index, checkpoint)


@dataclass(frozen=True)
class Shift:
    """Evaluation-time change of the input law.

    variance_doubled doubles input variance (for spherical queries: doubles
    the radius); seq_len overrides sequence length for the sequence families.
    """

    variance_doubled: bool = False
    seq_len: int | None = None

    @property
    def name(self) -> str:
        parts = []
        if self.variance_doubled:
            parts.append("variance_doubled")
        if self.seq_len is not None:
            parts.append(f"seq_len_{self.seq_len}")
        return "+".join(parts) if parts else "in_distribution"

    def validate(self, family: str):
        if self.seq_len is not None:
            if family == "mlp":
                raise TaskError("seq_len shift is not defined for the mlp family")
            if self.seq_len not in SEQ_LEN_CHOICES:
                raise TaskError(f"seq_len must be one of {SEQ_LEN_CHOICES}, got {self.seq_len}")


IN_DISTRIBUTION = Shift()


def default_shifts(family: str) -> list[Shift]:
    """The evaluation grid used for a family: variance shift everywhere,
    sequence-length and combined shifts for the sequence families."""
    shifts = [IN_DISTRIBUTION, Shift(variance_doubled=True)]
    if family != "mlp":
        shifts += [Shift(seq_len=n) for n in SEQ_LEN_CHOICES]
        shifts += [Shift(variance_doubled=True, seq_len=n) for n in SEQ_LEN_CHOICES]
    return shifts


@dataclass(frozen=True)
class MlpTask:
    rules: int
    coef1: np.ndarray  # (R,) weight on the first input scalar
    coef2: np.ndarray  # (R,) weight on the second input scalar

    family = "mlp"


@dataclass(frozen=True)
class MhaTask:
    rules: int
    coef1: np.ndarray  # (R,) weight on the first retrieved value
    coef2: np.ndarray  # (R,) weight on the second retrieved value
    search_version: int = 1
    dot_argmax: bool = False  # flip version-2 search to most-aligned queries

    family = "mha"

    @property
    def query_dim(self) -> int:
        return 1 if self.search_version == 1 else 2

    @property
    def token_dim(self) -> int:
        # per rule channel: two queries, two values
        return 2 * self.query_dim + 2


@dataclass(frozen=True)
class RnnTask:
    rules: int
    transition: np.ndarray  # (R, 32, 32) state transition per rule
    input_map: np.ndarray  # (R, 32, 32) input-to-state map per rule
    readout: np.ndarray  # (32,) shared readout vector

    family = "rnn"


@dataclass
class Batch:
    family: str
    mode: str
    inputs: np.ndarray
    rule_ids: np.ndarray
    labels: np.ndarray
    seq_len: int | None = None

    def __len__(self) -> int:
        return self.inputs.shape[0]


def sample_task(family: str, rules: int, task_seed: int, search_version: int = 1,
                dot_argmax: bool = False):
    """Draw a frozen task parameter set; deterministic in (family, rules, seed)."""
    if rules < 1:
        raise TaskError(f"rule count must be >= 1, got {rules}")
    if family not in FAMILIES:
        raise TaskError(f"unsupported family {family!r}; expected one of {FAMILIES}")
    rng = _rng(task_seed, FAMILIES.index(family))
    if family == "mlp":
        return MlpTask(rules, rng.standard_normal(rules), rng.standard_normal(rules))
    if family == "mha":
        if search_version not in (1, 2):
            raise TaskError(f"search_version must be 1 or 2, got {search_version}")
        return MhaTask(rules, rng.standard_normal(rules), rng.standard_normal(rules),
                       search_version=search_version, dot_argmax=dot_argmax)
    std = RNN_STATE_DIM ** -0.25  # variance 1/sqrt(32)
    shape = (rules, RNN_STATE_DIM, RNN_STATE_DIM)
    return RnnTask(rules,
                   rng.standard_normal(shape) * std,
                   rng.standard_normal(shape) * std,
                   rng.standard_normal(RNN_STATE_DIM))


def mlp_label(task: MlpTask, x1, x2, c):
    """Rule-specific linear combination of the two input scalars."""
    c = np.asarray(c, dtype=np.int64)
    return task.coef1[c] * np.asarray(x1) + task.coef2[c] * np.asarray(x2)


def mha_label(task: MhaTask, tokens: np.ndarray, rule_ids: np.ndarray) -> np.ndarray:
    """Per-token labels for a batch of token sequences.

    tokens: (B, N, R, token_dim) laid out as [q, q', v, v'] per rule channel.
    For each token, the rule picks the closest other token under each of its
    two query channels (ties to the lowest index) and mixes the two values
    retrieved there.
    """
    if tokens.ndim == 3:  # single sample convenience
        return mha_label(task, tokens[None], np.asarray(rule_ids)[None])[0]
    B, N = tokens.shape[0], tokens.shape[1]
    if N < 2:
        raise TaskError(f"mha sequences need at least 2 tokens, got {N}")
    qd = task.query_dim
    rule_ids = np.asarray(rule_ids, dtype=np.int64)
    eye = np.eye(N, dtype=bool)

    def closest(queries):
        # queries: (B, N, R, qd) -> index of the nearest other token, (B, N)
        q = np.moveaxis(queries, 2, 1)  # (B, R, N, qd)
        if task.search_version == 1:
            dist = np.abs(q[:, :, :, None, 0] - q[:, :, None, :, 0])
        else:
            dist = np.einsum("brnd,brmd->brnm", q, q)
            if task.dot_argmax:
                dist = -dist
        dist[:, :, eye] = np.inf
        nearest = dist.argmin(axis=-1)  # (B, R, N); argmin takes the lowest index on ties
        b = np.arange(B)[:, None]
        n = np.arange(N)[None, :]
        return nearest[b, rule_ids, n]

    s1 = closest(tokens[:, :, :, 0:qd])
    s2 = closest(tokens[:, :, :, qd : 2 * qd])
    b = np.arange(B)[:, None]
    v1 = tokens[b, s1, rule_ids, 2 * qd]
    v2 = tokens[b, s2, rule_ids, 2 * qd + 1]
    return task.coef1[rule_ids] * v1 + task.coef2[rule_ids] * v2


def rnn_label(task: RnnTask, x: np.ndarray, rule_ids: np.ndarray) -> np.ndarray:
    """Per-step labels: switching linear recursion from a zero initial state."""
    if x.ndim == 2:  # single sample convenience
        return rnn_label(task, x[None], np.asarray(rule_ids)[None])[0]
    B, N, dim = x.shape
    rule_ids = np.asarray(rule_ids, dtype=np.int64)
    s = np.zeros((B, dim))
    out = np.zeros((B, N))
    for n in range(N):
        A = task.transition[rule_ids[:, n]]
        Bm = task.input_map[rule_ids[:, n]]
        s = np.einsum("bij,bj->bi", A, s) + np.einsum("bij,bj->bi", Bm, x[:, n])
        out[:, n] = s @ task.readout
    return out


def _sample_rule_ids(rng, shape, rules: int, rule_probs) -> np.ndarray:
    if rule_probs is None:
        return rng.integers(0, rules, size=shape)
    p = np.asarray(rule_probs, dtype=np.float64)
    if p.shape != (rules,) or np.any(p < 0):
        raise TaskError(f"rule_probs must be a length-{rules} distribution")
    p = p / p.sum()
    flat = rng.choice(rules, size=int(np.prod(shape)), p=p)
    return flat.reshape(shape)


def sample_batch(task, batch_size: int, mode: str, shift: Shift, data_seed,
                 seq_len: int = DEFAULT_SEQ_LEN, rule_probs=None) -> Batch:
    """Draw a labeled batch under the given distribution shift.

    data_seed may be an int or a tuple of ints. rule_probs replaces the
    default equiprobable rule draw (used only by the adaptation metric).
    """
    if mode not in MODES:
        raise TaskError(f"mode must be one of {MODES}, got {mode!r}")
    shift.validate(task.family)
    std = np.sqrt(2.0) if shift.variance_doubled else 1.0
    entropy = data_seed if isinstance(data_seed, tuple) else (data_seed,)
    rng = _rng(*entropy)

    if task.family == "mlp":
        x = rng.standard_normal((batch_size, 2)) * std
        c = _sample_rule_ids(rng, (batch_size,), task.rules, rule_probs)
        y = mlp_label(task, x[:, 0], x[:, 1], c)
        n_tokens = None
    elif task.family == "mha":
        n_tokens = shift.seq_len or seq_len
        qd = task.query_dim
        shape = (batch_size, n_tokens, task.rules, task.token_dim)
        x = rng.standard_normal(shape) * std
        if task.search_version == 2:
            # queries live on a sphere; the variance shift doubles its radius
            radius = 2.0 if shift.variance_doubled else 1.0
            for lo in (0, qd):
                q = rng.standard_normal((batch_size, n_tokens, task.rules, qd))
                q *= radius / np.linalg.norm(q, axis=-1, keepdims=True)
                x[:, :, :, lo : lo + qd] = q
        c = _sample_rule_ids(rng, (batch_size, n_tokens), task.rules, rule_probs)
        y = mha_label(task, x, c)
    elif task.family == "rnn":
        n_tokens = shift.seq_len or seq_len
        x = rng.standard_normal((batch_size, n_tokens, RNN_STATE_DIM)) * std
        c = _sample_rule_ids(rng, (batch_size, n_tokens), task.rules, rule_probs)
        y = rnn_label(task, x, c)
    else:
        raise TaskError(f"unsupported family {task.family!r}")

    labels = (y > 0).astype(np.float64) if mode == "classification" else y
    return Batch(task.family, mode, x, c, labels, seq_len=n_tokens)


def dump_batch(batch: Batch, fh):
    """Write one JSON object per sample, for cross-implementation diffing."""
    for i in range(len(batch)):
        row = {
            "family": batch.family,
            "mode": batch.mode,
            "inputs": np.asarray(batch.inputs[i]).tolist(),
            "rule_ids": np.asarray(batch.rule_ids[i]).tolist(),
            "label": np.asarray(batch.labels[i]).tolist(),
        }
        fh.write(json.dumps(row) + "\n")
