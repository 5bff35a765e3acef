"""Dense float64 tensors with tape-based reverse-mode differentiation.

Just enough machinery to express and train every model in the zoo: a small
fixed set of primitives, a per-forward-pass tape, and gradient accumulation
into leaf parameters. No broadcasting beyond scalar scaling, bias-style
add/subtract over the last axis, and batched matmul.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "Parameter",
    "Tape",
    "ShapeError",
    "DomainError",
    "OP_KINDS",
    "apply_op",
    "backward",
    "zero_gradients",
    "matmul",
    "add",
    "subtract",
    "multiply",
    "scale",
    "relu",
    "tanh",
    "sigmoid",
    "softmax",
    "log",
    "exp",
    "absolute",
    "tensor_sum",
    "tensor_mean",
    "concat",
    "slice_last",
    "gather_rows",
    "transpose_last2",
]


class ShapeError(ValueError):
    """Operand shapes do not conform for the requested primitive."""


class DomainError(ValueError):
    """Operand values outside the documented domain of the primitive."""


_ACTIVE_TAPE = None


class Tensor:
    """Immutable-by-convention dense array of float64 values."""

    __slots__ = ("values", "requires_grad")

    def __init__(self, values, requires_grad: bool = False):
        self.values = np.asarray(values, dtype=np.float64)
        self.requires_grad = requires_grad

    @property
    def shape(self):
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    def item(self) -> float:
        return float(self.values)

    def __repr__(self):
        return f"Tensor(shape={self.values.shape}, requires_grad={self.requires_grad})"

    # Operator sugar; everything routes through the module-level primitives.
    def __matmul__(self, other):
        return matmul(self, other)

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return subtract(self, other)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, other)
        return multiply(self, other)

    def __rmul__(self, other):
        return scale(self, other)

    def __neg__(self):
        return scale(self, -1.0)


class Parameter(Tensor):
    """Trainable leaf: value plus gradient and optimizer state slots."""

    __slots__ = ("name", "grad", "m", "v", "step")

    def __init__(self, values, name: str = ""):
        super().__init__(values, requires_grad=True)
        self.name = name
        self.grad = np.zeros_like(self.values)
        self.m = np.zeros_like(self.values)
        self.v = np.zeros_like(self.values)
        self.step = 0

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.values.shape})"


class Tape:
    """Ordered record of primitive applications for one forward pass.

    Entries are appended in execution order, so every operand of entry k was
    produced by an earlier entry or is a leaf; backward walks the entries in
    reverse exactly once.
    """

    def __init__(self):
        self.entries = []  # (inputs tuple, output Tensor, backward rule)
        self.applications = 0

    def __enter__(self):
        global _ACTIVE_TAPE
        self._outer = _ACTIVE_TAPE
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, exc_type, exc, tb):
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = self._outer
        return False

    def __len__(self):
        return len(self.entries)

    def backward(self, loss: Tensor):
        """Accumulate d(loss)/d(leaf) into every Parameter reached by the tape."""
        if loss.values.size != 1:
            raise ShapeError(f"backward: loss must be scalar, got shape {loss.values.shape}")
        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.values)}

        def accum(t: Tensor, delta: np.ndarray):
            if isinstance(t, Parameter):
                t.grad += delta
            elif t.requires_grad:
                key = id(t)
                prior = grads.get(key)
                grads[key] = delta if prior is None else prior + delta

        self.applications = 0
        for inputs, out, rule in reversed(self.entries):
            g = grads.pop(id(out), None)
            if g is None:
                g = np.zeros_like(out.values)
            rule(g, accum)
            self.applications += 1


def backward(tape: Tape, loss: Tensor):
    tape.backward(loss)


def zero_gradients(parameters):
    for p in parameters:
        p.grad[...] = 0.0


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(inputs, out: Tensor, rule):
    if _ACTIVE_TAPE is not None and out.requires_grad:
        _ACTIVE_TAPE.entries.append((inputs, out, rule))


def _needs(*tensors) -> bool:
    return any(t.requires_grad for t in tensors)


def matmul(a, b) -> Tensor:
    """Matrix product: 2-D @ 2-D, batched 3-D @ 3-D, or 3-D @ shared 2-D."""
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.values, b.values
    if av.ndim == 2 and bv.ndim == 2:
        ok = av.shape[1] == bv.shape[0]
    elif av.ndim == 3 and bv.ndim == 3:
        ok = av.shape[0] == bv.shape[0] and av.shape[2] == bv.shape[1]
    elif av.ndim == 3 and bv.ndim == 2:
        ok = av.shape[2] == bv.shape[0]
    else:
        ok = False
    if not ok:
        raise ShapeError(f"matmul: shapes {av.shape} @ {bv.shape} do not conform")
    out = Tensor(av @ bv, requires_grad=_needs(a, b))

    def rule(g, accum):
        if a.requires_grad:
            accum(a, g @ np.swapaxes(bv, -1, -2))
        if b.requires_grad:
            if av.ndim == 3 and bv.ndim == 2:
                accum(b, np.tensordot(av, g, axes=([0, 1], [0, 1])))
            else:
                accum(b, np.swapaxes(av, -1, -2) @ g)

    _record((a, b), out, rule)
    return out


def _bias_conformance(op: str, av: np.ndarray, bv: np.ndarray) -> bool:
    """True for bias-style broadcasting (..., d) op (d,); False for same-shape."""
    if av.shape == bv.shape:
        return False
    if bv.ndim == 1 and av.ndim >= 1 and av.shape[-1] == bv.shape[0]:
        return True
    raise ShapeError(f"{op}: shapes {av.shape} and {bv.shape} do not conform")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.values, b.values
    bias = _bias_conformance("add", av, bv)
    out = Tensor(av + bv, requires_grad=_needs(a, b))

    def rule(g, accum):
        if a.requires_grad:
            accum(a, g)
        if b.requires_grad:
            accum(b, g.reshape(-1, bv.shape[0]).sum(axis=0) if bias else g)

    _record((a, b), out, rule)
    return out


def subtract(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.values, b.values
    bias = _bias_conformance("subtract", av, bv)
    out = Tensor(av - bv, requires_grad=_needs(a, b))

    def rule(g, accum):
        if a.requires_grad:
            accum(a, g)
        if b.requires_grad:
            accum(b, -(g.reshape(-1, bv.shape[0]).sum(axis=0)) if bias else -g)

    _record((a, b), out, rule)
    return out


def multiply(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    av, bv = a.values, b.values
    if av.shape != bv.shape:
        raise ShapeError(f"elementwise-multiply: shapes {av.shape} and {bv.shape} differ")
    out = Tensor(av * bv, requires_grad=_needs(a, b))

    def rule(g, accum):
        if a.requires_grad:
            accum(a, g * bv)
        if b.requires_grad:
            accum(b, g * av)

    _record((a, b), out, rule)
    return out


def scale(a, s) -> Tensor:
    a = _as_tensor(a)
    s = float(s)
    out = Tensor(a.values * s, requires_grad=a.requires_grad)

    def rule(g, accum):
        accum(a, g * s)

    _record((a,), out, rule)
    return out


def _elementwise(a, fwd, make_rule, name: str) -> Tensor:
    a = _as_tensor(a)
    out = Tensor(fwd(a.values), requires_grad=a.requires_grad)
    _record((a,), out, make_rule(a, out))
    return out


def relu(a) -> Tensor:
    def make_rule(a, out):
        mask = a.values > 0

        def rule(g, accum):
            accum(a, g * mask)

        return rule

    return _elementwise(a, lambda x: np.maximum(x, 0.0), make_rule, "relu")


def tanh(a) -> Tensor:
    def make_rule(a, out):
        def rule(g, accum):
            accum(a, g * (1.0 - out.values ** 2))

        return rule

    return _elementwise(a, np.tanh, make_rule, "tanh")


def sigmoid(a) -> Tensor:
    def make_rule(a, out):
        def rule(g, accum):
            accum(a, g * out.values * (1.0 - out.values))

        return rule

    def fwd(x):
        # Split-domain form avoids overflow in exp for large |x|.
        pos = x >= 0
        z = np.empty_like(x)
        z[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
        e = np.exp(x[~pos])
        z[~pos] = e / (1.0 + e)
        return z

    return _elementwise(a, fwd, make_rule, "sigmoid")


def softmax(a) -> Tensor:
    """Softmax over the last axis, computed with max subtraction."""
    a = _as_tensor(a)
    av = a.values
    if av.ndim < 1:
        raise ShapeError("softmax: needs at least one axis")
    shifted = av - av.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=-1, keepdims=True)
    out = Tensor(y, requires_grad=a.requires_grad)

    def rule(g, accum):
        dot = (g * y).sum(axis=-1, keepdims=True)
        accum(a, y * (g - dot))

    _record((a,), out, rule)
    return out


def log(a) -> Tensor:
    a = _as_tensor(a)
    if np.any(a.values <= 0.0):
        raise DomainError("log: non-positive input value")

    def make_rule(a, out):
        def rule(g, accum):
            accum(a, g / a.values)

        return rule

    return _elementwise(a, np.log, make_rule, "log")


def exp(a) -> Tensor:
    def make_rule(a, out):
        def rule(g, accum):
            accum(a, g * out.values)

        return rule

    return _elementwise(a, np.exp, make_rule, "exp")


def absolute(a) -> Tensor:
    def make_rule(a, out):
        sign = np.sign(a.values)

        def rule(g, accum):
            accum(a, g * sign)

        return rule

    return _elementwise(a, np.abs, make_rule, "abs")


def tensor_sum(a, axis=None) -> Tensor:
    """Sum over all entries (axis=None) or over the last axis (axis=-1)."""
    a = _as_tensor(a)
    if axis not in (None, -1):
        raise ShapeError(f"sum: axis must be None or -1, got {axis}")
    out = Tensor(a.values.sum(axis=axis), requires_grad=a.requires_grad)

    def rule(g, accum):
        if axis is None:
            accum(a, np.full_like(a.values, float(g)))
        else:
            accum(a, np.broadcast_to(g[..., None], a.values.shape).copy())

    _record((a,), out, rule)
    return out


def tensor_mean(a, axis=None) -> Tensor:
    a = _as_tensor(a)
    if axis not in (None, -1):
        raise ShapeError(f"mean: axis must be None or -1, got {axis}")
    n = a.values.size if axis is None else a.values.shape[-1]
    out = Tensor(a.values.mean(axis=axis), requires_grad=a.requires_grad)

    def rule(g, accum):
        if axis is None:
            accum(a, np.full_like(a.values, float(g) / n))
        else:
            accum(a, np.broadcast_to(g[..., None], a.values.shape) / n)

    _record((a,), out, rule)
    return out


def concat(tensors) -> Tensor:
    """Concatenate along the last axis."""
    ts = [_as_tensor(t) for t in tensors]
    if not ts:
        raise ShapeError("concat: empty operand list")
    lead = ts[0].values.shape[:-1]
    for t in ts:
        if t.values.shape[:-1] != lead:
            raise ShapeError(
                f"concat: leading shapes differ ({[t.values.shape for t in ts]})"
            )
    out = Tensor(np.concatenate([t.values for t in ts], axis=-1), requires_grad=_needs(*ts))
    widths = [t.values.shape[-1] for t in ts]

    def rule(g, accum):
        start = 0
        for t, w in zip(ts, widths):
            if t.requires_grad:
                accum(t, g[..., start : start + w])
            start += w

    _record(tuple(ts), out, rule)
    return out


def slice_last(a, start: int, stop: int) -> Tensor:
    """Contiguous slice [start:stop] of the last axis."""
    a = _as_tensor(a)
    d = a.values.shape[-1]
    if not (0 <= start < stop <= d):
        raise ShapeError(f"slice: [{start}:{stop}] invalid for last axis of size {d}")
    out = Tensor(a.values[..., start:stop].copy(), requires_grad=a.requires_grad)

    def rule(g, accum):
        full = np.zeros_like(a.values)
        full[..., start:stop] = g
        accum(a, full)

    _record((a,), out, rule)
    return out


def gather_rows(a, index) -> Tensor:
    """Select rows of a 2-D tensor by integer index."""
    a = _as_tensor(a)
    if a.values.ndim != 2:
        raise ShapeError(f"gather-rows: expected 2-D operand, got shape {a.values.shape}")
    idx = np.asarray(index, dtype=np.int64)
    if idx.ndim != 1 or np.any(idx < 0) or np.any(idx >= a.values.shape[0]):
        raise ShapeError(f"gather-rows: bad index array for {a.values.shape[0]} rows")
    out = Tensor(a.values[idx], requires_grad=a.requires_grad)

    def rule(g, accum):
        full = np.zeros_like(a.values)
        np.add.at(full, idx, g)
        accum(a, full)

    _record((a,), out, rule)
    return out


def transpose_last2(a) -> Tensor:
    """Swap the trailing two axes (plain transpose for 2-D operands)."""
    a = _as_tensor(a)
    if a.values.ndim < 2:
        raise ShapeError(f"transpose-2d: needs >= 2 axes, got shape {a.values.shape}")
    out = Tensor(np.swapaxes(a.values, -1, -2).copy(), requires_grad=a.requires_grad)

    def rule(g, accum):
        accum(a, np.swapaxes(g, -1, -2))

    _record((a,), out, rule)
    return out


_OPS = {
    "matmul": matmul,
    "add": add,
    "subtract": subtract,
    "elementwise-multiply": multiply,
    "scalar-scale": scale,
    "relu": relu,
    "tanh": tanh,
    "sigmoid": sigmoid,
    "softmax-over-last-axis": softmax,
    "log": log,
    "exp": exp,
    "abs": absolute,
    "sum": tensor_sum,
    "mean": tensor_mean,
    "concat-last-axis": concat,
    "slice": slice_last,
    "gather-rows": gather_rows,
    "transpose-2d": transpose_last2,
}

OP_KINDS = tuple(_OPS)


def apply_op(kind: str, *operands, **kwargs) -> Tensor:
    """Apply a primitive by name; rejects unknown kinds with the full list."""
    if kind not in _OPS:
        raise ValueError(f"unknown op kind {kind!r}; expected one of {sorted(_OPS)}")
    return _OPS[kind](*operands, **kwargs)
