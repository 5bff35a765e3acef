"""End-to-end optimization: Adam on fresh batches every iteration.

Regression trains on mean absolute error; classification on binary
cross-entropy over logits (computed in softplus form so large logits cannot
overflow). Gradient-norm clipping applies to the rnn family only.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .metrics import ActivationStats
from .rules import IN_DISTRIBUTION, Shift, batch_seed, eval_seed, sample_batch
from .tensor import Tape, Tensor, zero_gradients

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8

DEFAULT_ITERATIONS = {"mlp": 20_000, "mha": 50_000, "rnn": 50_000}


class DivergenceError(RuntimeError):
    """Loss became non-finite; the run is aborted and recorded as diverged."""


@dataclass
class TrainConfig:
    iterations: int = 20_000
    batch_size: int = 256
    learning_rate: float = 1e-4
    clip_norm: float | None = None  # set for the rnn family, None otherwise
    mode: str = "regression"
    eval_every: int = 2_000
    eval_samples: int = 10_000
    eval_shifts: tuple = (IN_DISTRIBUTION,)
    seq_len: int = 10

    def __post_init__(self):
        # learning_rate 0 is allowed so smoke tests can freeze parameters
        if self.batch_size < 1 or self.learning_rate < 0 or self.iterations < 0:
            raise ValueError("batch_size >= 1, learning_rate >= 0, iterations >= 0")
        if self.eval_every < 1 or self.eval_samples < 1:
            raise ValueError("eval_every and eval_samples must be positive")


@dataclass
class TrainLog:
    checkpoints: list = field(default_factory=list)
    status: str = "ok"

    def append(self, iteration: int, train_loss: float, evals: dict):
        if self.checkpoints and iteration <= self.checkpoints[-1]["iter"]:
            raise ValueError("checkpoints must be strictly increasing in iteration")
        self.checkpoints.append(
            {"iter": iteration, "train_loss": train_loss, "evals": evals}
        )

    def dump_jsonl(self, fh):
        import json

        for row in self.checkpoints:
            fh.write(json.dumps(row) + "\n")


def loss(mode: str, predictions: Tensor, labels: Tensor) -> Tensor:
    """Scalar training loss.

    regression: mean |prediction - label|. classification: mean binary
    cross-entropy of the label against sigmoid(prediction); predictions are
    logits and the loss is evaluated as mean(softplus(z) - z * y).
    """
    if predictions.values.shape != labels.values.shape:
        raise T.ShapeError(
            f"loss: prediction shape {predictions.values.shape} != "
            f"label shape {labels.values.shape}"
        )
    if not np.all(np.isfinite(predictions.values)):
        raise DivergenceError("non-finite predictions")
    if mode == "regression":
        return T.tensor_mean(T.absolute(T.subtract(predictions, labels)))
    if mode == "classification":
        z = predictions
        softplus = T.add(T.relu(z), T.log(T.add(T.exp(T.scale(T.absolute(z), -1.0)),
                                                Tensor(np.ones(z.values.shape)))))
        return T.tensor_mean(T.subtract(softplus, T.multiply(z, labels)))
    raise ValueError(f"unknown mode {mode!r}")


def adam_step(parameters, lr: float):
    """Standard Adam update with bias correction, in place."""
    for p in parameters:
        p.step += 1
        p.m *= ADAM_BETA1
        p.m += (1 - ADAM_BETA1) * p.grad
        p.v *= ADAM_BETA2
        p.v += (1 - ADAM_BETA2) * p.grad ** 2
        m_hat = p.m / (1 - ADAM_BETA1 ** p.step)
        v_hat = p.v / (1 - ADAM_BETA2 ** p.step)
        p.values -= lr * m_hat / (np.sqrt(v_hat) + ADAM_EPS)


def clip_gradient_norm(parameters, max_norm: float) -> float:
    """Scale all gradients so the global L2 norm is at most max_norm.

    Returns the applied scale (1.0 when no clipping happened).
    """
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    total = 0.0
    for p in parameters:
        total += float((p.grad ** 2).sum())
    norm = np.sqrt(total)
    if norm <= max_norm:
        return 1.0
    scaling = max_norm / norm
    for p in parameters:
        p.grad *= scaling
    return float(scaling)


def _labels_tensor(batch, predictions: Tensor) -> Tensor:
    return Tensor(np.asarray(batch.labels).reshape(predictions.values.shape))


def evaluate(model, task, shift: Shift, n_samples: int, eval_seed_material,
             mode: str, seq_len: int = 10, chunk: int = 2048):
    """Performance plus accumulated activation stats on fresh samples.

    classification: error rate with the decision threshold at sigmoid 0.5
    (logit 0). regression: mean absolute error. Never mutates parameters.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if task.family == "mha":
        # label search builds a (B, R, N, N) distance tensor; keep it small
        chunk = min(chunk, 256)
    stats = ActivationStats(task.rules)
    err_sum, n_points = 0.0, 0
    remaining, piece = n_samples, 0
    entropy = eval_seed_material if isinstance(eval_seed_material, tuple) \
        else (eval_seed_material,)
    while remaining > 0:
        size = min(chunk, remaining)
        batch = sample_batch(task, size, mode, shift, entropy + (piece,),
                             seq_len=seq_len)
        out = model.forward(batch)
        preds = out.predictions_array()
        labels = np.asarray(batch.labels)
        if mode == "classification":
            err = ((preds > 0.0) != (labels > 0.5)).astype(np.float64)
        else:
            err = np.abs(preds - labels)
        err_sum += float(err.sum())
        n_points += err.size
        stats.update(out.activations, out.activation_rule_ids)
        remaining -= size
        piece += 1
    return err_sum / n_points, stats


def _param_checksum(parameters) -> str:
    h = hashlib.sha256()
    for p in parameters:
        h.update(p.values.tobytes())
    return h.hexdigest()


def train(model, task, config: TrainConfig, task_seed: int):
    """Run the full optimization loop; returns (model, TrainLog).

    Fresh batch every iteration, seeded by (task_seed, iteration) so the data
    stream is identical for every model trained on the task. Divergence
    aborts the run and marks the log instead of raising.
    """
    if model.config.family != task.family:
        raise ValueError(
            f"model family {model.config.family!r} != task family {task.family!r}"
        )
    params = model.parameters()
    log = TrainLog()
    shifts = list(config.eval_shifts)
    window: list[float] = []
    for it in range(config.iterations):
        batch = sample_batch(task, config.batch_size, config.mode, IN_DISTRIBUTION,
                             batch_seed(task_seed, it), seq_len=config.seq_len)
        zero_gradients(params)
        try:
            with Tape() as tape:
                out = model.forward(batch)
                step_loss = loss(config.mode, out.predictions, _labels_tensor(batch, out.predictions))
            value = float(step_loss.values)
            if not np.isfinite(value):
                raise DivergenceError(f"loss {value} at iteration {it}")
        except DivergenceError as exc:
            log.status = f"diverged: {exc}"
            return model, log
        tape.backward(step_loss)
        if config.clip_norm is not None:
            clip_gradient_norm(params, config.clip_norm)
        adam_step(params, config.learning_rate)
        window.append(value)
        if (it + 1) % config.eval_every == 0 or it + 1 == config.iterations:
            evals = {}
            for si, shift in enumerate(shifts):
                perf, _ = evaluate(model, task, shift, config.eval_samples,
                                   eval_seed(task_seed, si, it + 1),
                                   config.mode, seq_len=config.seq_len)
                evals[shift.name] = perf
            log.append(it + 1, float(np.mean(window)), evals)
            window = []
    return model, log
