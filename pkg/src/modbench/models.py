"""The model zoo: four gating levels over three cell families.

Levels, from least to most built-in structure:

* monolithic: one network consumes the encoded (input, context) pair.
* modular: R modules, each emitting an output and a confidence score;
  activations are the softmax of the scores and the outputs are mixed.
* modular_op: like modular, but the activations come from a separate gate
  network that sees only the encoded context.
* gt_modular: activations are the one-hot indicator of the true rule.
* random_gate: diagnostic baseline; activations are uniform-random one-hots
  independent of input and context.

All levels of one family share the same encoder/decoder layout so parameter
budgets stay comparable; `resolve_width` picks the widest hidden size that
fits a budget. `reduce_level` builds the witness model one level weaker that
reproduces a source model's input-output map (see its docstring for the
supported combinations).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from . import tensor as T
from .rules import RNN_STATE_DIM, Batch, FAMILIES
from .tensor import Parameter, Tensor

LEVELS = ("monolithic", "modular", "modular_op", "gt_modular", "random_gate")
GATED_LEVELS = ("modular", "modular_op", "gt_modular", "random_gate")

MLP_ENC_DIM = 16
MLP_OUT_DIM = 16
SEQ_ENC_DIM = 32
SEQ_OUT_DIM = 32
HEADS_PER_MODULE = 2

# logit gap treated as effectively one-hot by the witness constructions
HARD_GATE_GAP = 35.0
_GATE_OFF = 1e30


class ModelError(ValueError):
    """Invalid model configuration or unsupported construction."""


class CapacityError(ModelError):
    """Requested parameter budget cannot be met."""


@dataclass(frozen=True)
class ModelConfig:
    level: str
    family: str
    rules: int
    width: int
    capacity: int | None = None
    search_version: int = 1  # mha input layout only
    gate_hidden: int = 16
    mono_hidden: tuple = ()  # monolithic trunk hidden sizes; () = (width,)

    def __post_init__(self):
        if self.level not in LEVELS:
            raise ModelError(f"unknown level {self.level!r}; expected one of {LEVELS}")
        if self.family not in FAMILIES:
            raise ModelError(f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.rules < 1 or self.width < 1:
            raise ModelError("rules and width must be positive")

    @property
    def hidden_sizes(self) -> tuple:
        return self.mono_hidden if self.mono_hidden else (self.width,)


@dataclass
class ForwardOutput:
    """Predictions plus per-decision-point activation records."""

    predictions: Tensor
    activations: np.ndarray  # (n_points, R), rows on the simplex
    activation_rule_ids: np.ndarray  # (n_points,)
    gating_logits: np.ndarray | None = None  # pre-softmax scores where defined

    def predictions_array(self) -> np.ndarray:
        """Predictions as a plain array shaped like the batch labels."""
        v = self.predictions.values
        if v.ndim >= 2 and v.shape[-1] == 1:
            v = v[..., 0]
        return v


class Linear:
    def __init__(self, name: str, fan_in: int, fan_out: int, rng, bias: bool = True):
        # fan-in-scaled uniform (He bound, suited to the relu trunks)
        bound = math.sqrt(6.0 / fan_in)
        self.W = Parameter(rng.uniform(-bound, bound, (fan_in, fan_out)), f"{name}.w")
        self.b = Parameter(np.zeros(fan_out), f"{name}.b") if bias else None

    def __call__(self, t: Tensor) -> Tensor:
        out = T.matmul(t, self.W)
        return T.add(out, self.b) if self.b is not None else out

    def parameters(self):
        return [self.W] if self.b is None else [self.W, self.b]


class Mlp:
    """Linear stack with relu between layers (linear output)."""

    def __init__(self, name: str, dims, rng):
        self.layers = [
            Linear(f"{name}.{i}", dims[i], dims[i + 1], rng) for i in range(len(dims) - 1)
        ]

    def __call__(self, t: Tensor) -> Tensor:
        for i, layer in enumerate(self.layers):
            t = layer(t)
            if i < len(self.layers) - 1:
                t = T.relu(t)
        return t

    def parameters(self):
        return [p for layer in self.layers for p in layer.parameters()]


class _AttentionBlock:
    """Multi-head soft attention over a token sequence."""

    def __init__(self, name: str, in_dim: int, heads: int, head_dim: int,
                 out_dim: int, rng):
        self.heads = [
            (
                Linear(f"{name}.h{i}.q", in_dim, head_dim, rng),
                Linear(f"{name}.h{i}.k", in_dim, head_dim, rng),
                Linear(f"{name}.h{i}.v", in_dim, head_dim, rng),
            )
            for i in range(heads)
        ]
        self.out = Linear(f"{name}.out", heads * head_dim, out_dim, rng)
        self._scale = 1.0 / math.sqrt(head_dim)

    def __call__(self, z: Tensor) -> Tensor:
        ctx = []
        for q_l, k_l, v_l in self.heads:
            q, k, v = q_l(z), k_l(z), v_l(z)
            att = T.softmax(T.scale(T.matmul(q, T.transpose_last2(k)), self._scale))
            ctx.append(T.matmul(att, v))
        return self.out(T.concat(ctx))

    def parameters(self):
        ps = [p for h in self.heads for l in h for p in l.parameters()]
        return ps + self.out.parameters()


class _RecurrentCell:
    """Plain tanh recurrence: state' = tanh(Wx z + state Wh + b)."""

    def __init__(self, name: str, in_dim: int, state_dim: int, rng):
        self.wx = Linear(f"{name}.wx", in_dim, state_dim, rng)
        # recurrent weights stay at the tighter bound so the state map's
        # spectral radius starts below one
        bound = 1.0 / math.sqrt(state_dim)
        self.wh = Parameter(rng.uniform(-bound, bound, (state_dim, state_dim)),
                            f"{name}.wh")

    def __call__(self, z: Tensor, state: Tensor) -> Tensor:
        return T.tanh(T.add(self.wx(z), T.matmul(state, self.wh)))

    def parameters(self):
        return self.wx.parameters() + [self.wh]


def _one_hot(ids: np.ndarray, rules: int) -> np.ndarray:
    ids = np.asarray(ids, dtype=np.int64)
    out = np.zeros(ids.shape + (rules,))
    np.put_along_axis(out, ids[..., None], 1.0, axis=-1)
    return out


def _mix(p: Tensor, outs: list, out_dim: int) -> Tensor:
    """Activation-weighted sum of module outputs: sum_m p_m out_m."""
    ones_row = Tensor(np.ones((1, out_dim)))
    acc = None
    for m, om in enumerate(outs):
        w = T.matmul(T.slice_last(p, m, m + 1), ones_row)
        term = T.multiply(w, om)
        acc = term if acc is None else T.add(acc, term)
    return acc


class _ModelBase:
    def __init__(self, config: ModelConfig, seed: int):
        self.config = config
        self._rng = np.random.default_rng(np.random.SeedSequence([int(seed), 11]))
        self._gate_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 77]))

    def parameters(self) -> list:
        raise NotImplementedError

    def _check_family(self, batch: Batch):
        if batch.family != self.config.family:
            raise ModelError(
                f"batch family {batch.family!r} does not match model family "
                f"{self.config.family!r}"
            )

    def _gate(self, scores: Tensor | None, ec: Tensor | None,
              onehot: np.ndarray) -> tuple[Tensor, np.ndarray | None]:
        """Activation tensor for the configured level, plus raw logits."""
        level = self.config.level
        R = self.config.rules
        if level == "modular":
            p = T.softmax(scores)
            return p, scores.values
        if level == "modular_op":
            logits = self.gate(ec)
            return T.softmax(logits), logits.values
        if level == "gt_modular":
            return Tensor(onehot), None
        if level == "random_gate":
            ids = self._gate_rng.integers(0, R, size=onehot.shape[:-1])
            return Tensor(_one_hot(ids, R)), None
        raise ModelError(f"no gating for level {level!r}")


class MlpModel(_ModelBase):
    """Two encoded scalars plus encoded context, one decision point per sample."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__(config, seed)
        rng = self._rng
        R, w = config.rules, config.width
        self.enc_x = Mlp("enc_x", (1, MLP_ENC_DIM, MLP_ENC_DIM), rng)
        self.enc_c = Mlp("enc_c", (R, MLP_ENC_DIM, MLP_ENC_DIM), rng)
        z_dim = 3 * MLP_ENC_DIM
        self.trunk = None
        self.modules = []
        self.gate = None
        if config.level == "monolithic":
            self.trunk = Mlp("trunk", (z_dim, *config.hidden_sizes, MLP_OUT_DIM), rng)
        else:
            for m in range(R):
                trunk = Linear(f"mod{m}.trunk", z_dim, w, rng)
                head = Linear(f"mod{m}.head", w, MLP_OUT_DIM, rng)
                score = Linear(f"mod{m}.score", w, 1, rng) if config.level == "modular" else None
                self.modules.append((trunk, head, score))
            if config.level == "modular_op":
                self.gate = Mlp("gate", (MLP_ENC_DIM, config.gate_hidden, R), rng)
        self.decoder = Linear("decoder", MLP_OUT_DIM, 1, rng)

    def parameters(self):
        ps = self.enc_x.parameters() + self.enc_c.parameters()
        if self.trunk is not None:
            ps += self.trunk.parameters()
        for trunk, head, score in self.modules:
            ps += trunk.parameters() + head.parameters()
            if score is not None:
                ps += score.parameters()
        if self.gate is not None:
            ps += self.gate.parameters()
        return ps + self.decoder.parameters()

    def forward(self, batch: Batch) -> ForwardOutput:
        self._check_family(batch)
        R = self.config.rules
        B = len(batch)
        onehot = _one_hot(batch.rule_ids, R)
        ex1 = self.enc_x(Tensor(batch.inputs[:, 0:1]))
        ex2 = self.enc_x(Tensor(batch.inputs[:, 1:2]))
        ec = self.enc_c(Tensor(onehot))
        z = T.concat([ex1, ex2, ec])
        if self.config.level == "monolithic":
            preds = self.decoder(self.trunk(z))
            acts = np.full((B, R), 1.0 / R)
            return ForwardOutput(preds, acts, np.asarray(batch.rule_ids))
        outs, scores = [], []
        for trunk, head, score in self.modules:
            h = T.relu(trunk(z))
            outs.append(head(h))
            if score is not None:
                scores.append(score(h))
        score_t = T.concat(scores) if scores else None
        p, logits = self._gate(score_t, ec, onehot)
        preds = self.decoder(_mix(p, outs, MLP_OUT_DIM))
        return ForwardOutput(preds, p.values.copy(), np.asarray(batch.rule_ids), logits)


class MhaModel(_ModelBase):
    """Attention cells over token sequences; one decision point per token."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__(config, seed)
        rng = self._rng
        R, w = config.rules, config.width
        token_dim = R * (2 * (1 if config.search_version == 1 else 2) + 2)
        self.enc_x = Mlp("enc_x", (token_dim, SEQ_ENC_DIM, SEQ_ENC_DIM), rng)
        self.enc_c = Mlp("enc_c", (R, SEQ_ENC_DIM, SEQ_ENC_DIM), rng)
        z_dim = 2 * SEQ_ENC_DIM
        self.block = None
        self.modules = []
        self.gate = None
        if config.level == "monolithic":
            self.block = _AttentionBlock("block", z_dim, HEADS_PER_MODULE * R, w,
                                         SEQ_OUT_DIM, rng)
        else:
            for m in range(R):
                block = _AttentionBlock(f"mod{m}", z_dim, HEADS_PER_MODULE, w,
                                        SEQ_OUT_DIM, rng)
                score = Linear(f"mod{m}.score", SEQ_OUT_DIM, 1, rng) \
                    if config.level == "modular" else None
                self.modules.append((block, score))
            if config.level == "modular_op":
                self.gate = Mlp("gate", (SEQ_ENC_DIM, config.gate_hidden, R), rng)
        self.decoder = Linear("decoder", SEQ_OUT_DIM, 1, rng)

    def parameters(self):
        ps = self.enc_x.parameters() + self.enc_c.parameters()
        if self.block is not None:
            ps += self.block.parameters()
        for block, score in self.modules:
            ps += block.parameters()
            if score is not None:
                ps += score.parameters()
        if self.gate is not None:
            ps += self.gate.parameters()
        return ps + self.decoder.parameters()

    def forward(self, batch: Batch) -> ForwardOutput:
        self._check_family(batch)
        R = self.config.rules
        B, N = batch.inputs.shape[:2]
        onehot = _one_hot(batch.rule_ids, R)
        ex = self.enc_x(Tensor(batch.inputs.reshape(B, N, -1)))
        ec = self.enc_c(Tensor(onehot))
        z = T.concat([ex, ec])
        rule_ids = np.asarray(batch.rule_ids).reshape(-1)
        if self.config.level == "monolithic":
            preds = self.decoder(self.block(z))
            acts = np.full((B * N, R), 1.0 / R)
            return ForwardOutput(preds, acts, rule_ids)
        outs, scores = [], []
        for block, score in self.modules:
            out_m = block(z)
            outs.append(out_m)
            if score is not None:
                scores.append(score(out_m))
        score_t = T.concat(scores) if scores else None
        p, logits = self._gate(score_t, ec, onehot)
        preds = self.decoder(_mix(p, outs, SEQ_OUT_DIM))
        return ForwardOutput(preds, p.values.reshape(-1, R).copy(), rule_ids,
                             None if logits is None else logits.reshape(-1, R))


class RnnModel(_ModelBase):
    """Recurrent cells over token sequences with a single carried state.

    Modular levels propose one state update per module from the shared
    previous state and mix the proposals with the per-step activations.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        super().__init__(config, seed)
        rng = self._rng
        R, w = config.rules, config.width
        self.enc_x = Mlp("enc_x", (RNN_STATE_DIM, SEQ_ENC_DIM, SEQ_ENC_DIM), rng)
        self.enc_c = Mlp("enc_c", (R, SEQ_ENC_DIM, SEQ_ENC_DIM), rng)
        z_dim = 2 * SEQ_ENC_DIM
        self.cell = None
        self.cells = []
        self.scores = []
        self.gate = None
        if config.level == "monolithic":
            self.cell = _RecurrentCell("cell", z_dim, w, rng)
        else:
            for m in range(R):
                self.cells.append(_RecurrentCell(f"mod{m}", z_dim, w, rng))
                if config.level == "modular":
                    self.scores.append(Linear(f"mod{m}.score", w, 1, rng))
            if config.level == "modular_op":
                self.gate = Mlp("gate", (SEQ_ENC_DIM, config.gate_hidden, R), rng)
        self.decoder = Linear("decoder", config.width, 1, rng)

    def parameters(self):
        ps = self.enc_x.parameters() + self.enc_c.parameters()
        if self.cell is not None:
            ps += self.cell.parameters()
        for cell in self.cells:
            ps += cell.parameters()
        for score in self.scores:
            ps += score.parameters()
        if self.gate is not None:
            ps += self.gate.parameters()
        return ps + self.decoder.parameters()

    def forward(self, batch: Batch) -> ForwardOutput:
        self._check_family(batch)
        R, w = self.config.rules, self.config.width
        B, N = batch.inputs.shape[:2]
        onehot = _one_hot(batch.rule_ids, R)
        state = Tensor(np.zeros((B, w)))
        preds, acts, logit_rows = [], [], []
        for n in range(N):
            zx = self.enc_x(Tensor(batch.inputs[:, n]))
            zc = self.enc_c(Tensor(onehot[:, n]))
            z = T.concat([zx, zc])
            if self.config.level == "monolithic":
                state = self.cell(z, state)
                acts.append(np.full((B, R), 1.0 / R))
            else:
                proposals = [cell(z, state) for cell in self.cells]
                score_t = None
                if self.scores:
                    score_t = T.concat([s(prop) for s, prop in zip(self.scores, proposals)])
                p, logits = self._gate(score_t, zc, onehot[:, n])
                state = _mix(p, proposals, w)
                acts.append(p.values.copy())
                if logits is not None:
                    logit_rows.append(logits)
            preds.append(self.decoder(state))
        out = T.concat(preds)  # (B, N)
        activations = np.stack(acts, axis=1).reshape(-1, R)
        logits_arr = np.stack(logit_rows, axis=1).reshape(-1, R) if logit_rows else None
        return ForwardOutput(out, activations, np.asarray(batch.rule_ids).reshape(-1),
                             logits_arr)


_FAMILY_CLASS = {"mlp": MlpModel, "mha": MhaModel, "rnn": RnnModel}


def build_model(config: ModelConfig, seed: int = 0):
    return _FAMILY_CLASS[config.family](config, seed)


def param_count(model) -> int:
    """Exact count of trainable scalars."""
    return int(sum(p.size for p in model.parameters()))


def resolve_width(level: str, family: str, rules: int, capacity: int,
                  search_version: int = 1, gate_hidden: int = 16) -> int:
    """Largest hidden width whose total parameter count fits the budget."""

    def count(w: int) -> int:
        cfg = ModelConfig(level=level, family=family, rules=rules, width=w,
                          search_version=search_version, gate_hidden=gate_hidden)
        return param_count(build_model(cfg, seed=0))

    if count(4) > capacity:
        raise CapacityError(
            f"capacity {capacity} too small for {level}/{family} at R={rules} "
            f"(needs {count(4)} at width 4)"
        )
    hi = 8
    while count(hi) <= capacity:
        hi *= 2
        if hi > 1 << 16:
            break
    lo = hi // 2
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if count(mid) <= capacity:
            lo = mid
        else:
            hi = mid
    return lo


def make_config(level: str, family: str, rules: int, capacity: int,
                search_version: int = 1, gate_hidden: int = 16) -> ModelConfig:
    width = resolve_width(level, family, rules, capacity,
                          search_version=search_version, gate_hidden=gate_hidden)
    return ModelConfig(level=level, family=family, rules=rules, width=width,
                       capacity=capacity, search_version=search_version,
                       gate_hidden=gate_hidden)


# ---------------------------------------------------------------------------
# Containment witnesses: build the next-weaker level reproducing a source
# model's input-output map.
# ---------------------------------------------------------------------------


def _context_encodings(model) -> np.ndarray:
    """Encoder outputs for the R one-hot contexts, row r = encoding of rule r."""
    return model.enc_c(Tensor(np.eye(model.config.rules))).values


def _onehot_recovery(enc: np.ndarray) -> np.ndarray:
    """Matrix M with M @ enc[r] = e_r; needs the R encodings independent."""
    R = enc.shape[0]
    M = np.linalg.pinv(enc.T)
    if not np.allclose(M @ enc.T, np.eye(R), atol=1e-8):
        raise ModelError(
            "context encodings are not linearly independent; cannot build witness "
            f"(R={R} > encoder dim, or degenerate encoder)"
        )
    return M


def _copy_linear(dst: Linear, src: Linear):
    dst.W.values[...] = src.W.values
    if dst.b is not None and src.b is not None:
        dst.b.values[...] = src.b.values


def _copy_mlp(dst: Mlp, src: Mlp):
    for d, s in zip(dst.layers, src.layers):
        _copy_linear(d, s)


def _copy_encoders(dst, src):
    _copy_mlp(dst.enc_x, src.enc_x)
    _copy_mlp(dst.enc_c, src.enc_c)


def _gt_to_modular_op(model):
    """Replace oracle gating by a gate net that reproduces it.

    The gate's hidden layer is kept in its linear (all-positive) region over
    the R context encodings, so an affine interpolation gives the true rule's
    module a logit of 50 and every other module 0; the softmax is then
    one-hot to within e^-50.
    """
    cfg = model.config
    enc = _context_encodings(model)
    M = _onehot_recovery(enc)
    gap = 50.0
    new_cfg = ModelConfig(level="modular_op", family=cfg.family, rules=cfg.rules,
                          width=cfg.width, capacity=cfg.capacity,
                          search_version=cfg.search_version, gate_hidden=cfg.rules)
    out = build_model(new_cfg, seed=0)
    _copy_encoders(out, model)
    _copy_linear(out.decoder, model.decoder)
    _copy_modules(out, model)
    lift = gap * M  # (R, e)
    g0, g1 = out.gate.layers
    g0.W.values[...] = lift.T
    g0.b.values[...] = 1.0  # keeps every hidden unit in the relu-identity region
    g1.W.values[...] = np.eye(cfg.rules)
    g1.b.values[...] = -1.0
    return out


def _copy_modules(dst, src):
    fam = src.config.family
    if fam == "mlp":
        for (dt, dh, _), (st, sh, _) in zip(dst.modules, src.modules):
            _copy_linear(dt, st)
            _copy_linear(dh, sh)
    elif fam == "mha":
        for (db, _), (sb, _) in zip(dst.modules, src.modules):
            for dh_t, sh_t in zip(db.heads, sb.heads):
                for dl, sl in zip(dh_t, sh_t):
                    _copy_linear(dl, sl)
            _copy_linear(db.out, sb.out)
    else:
        for dc, sc in zip(dst.cells, src.cells):
            _copy_linear(dc.wx, sc.wx)
            dc.wh.values[...] = sc.wh.values


def _op_to_modular_mlp(model):
    """Widen each module trunk to also compute the gate's hidden layer; the
    score head then reads the gate logits off the extra units."""
    cfg = model.config
    hg = len(model.gate.layers[0].b.values)
    v1, v2 = model.gate.layers
    new_cfg = ModelConfig(level="modular", family="mlp", rules=cfg.rules,
                          width=cfg.width + hg, capacity=cfg.capacity,
                          search_version=cfg.search_version)
    out = build_model(new_cfg, seed=0)
    _copy_encoders(out, model)
    _copy_linear(out.decoder, model.decoder)
    w = cfg.width
    z_dim = 3 * MLP_ENC_DIM
    c_lo = 2 * MLP_ENC_DIM  # context slice of the trunk input
    for m, ((dt, dh, ds), (st, sh, _)) in enumerate(zip(out.modules, model.modules)):
        dt.W.values[...] = 0.0
        dt.W.values[:, :w] = st.W.values
        dt.W.values[c_lo:z_dim, w:] = v1.W.values
        dt.b.values[:w] = st.b.values
        dt.b.values[w:] = v1.b.values
        dh.W.values[...] = 0.0
        dh.W.values[:w] = sh.W.values
        dh.b.values[...] = sh.b.values
        ds.W.values[...] = 0.0
        ds.W.values[w:, 0] = v2.W.values[:, m]
        ds.b.values[...] = v2.b.values[m]
    return out


def _op_to_modular_rnn(model):
    """Extend the state with a squashed copy of the context encoding and read
    the tabulated gate logits off it affinely.

    The gate depends only on the context, so its output is fully described by
    the table L[r] = gate(enc_c(rule r)). Extra state units carry
    tanh(eps * enc_c) which the score heads unsquash; eps is small enough
    that the cubic tanh error stays far below the witness tolerance.
    """
    cfg = model.config
    enc = _context_encodings(model)  # (R, e)
    M = _onehot_recovery(enc)
    table = model.gate(Tensor(enc)).values  # (R, R) logits per context
    A = table.T @ M  # (R, e): A @ enc[r] = table[r]
    eps = 1e-7
    e = SEQ_ENC_DIM
    w = cfg.width
    new_cfg = ModelConfig(level="modular", family="rnn", rules=cfg.rules,
                          width=w + e, capacity=cfg.capacity,
                          search_version=cfg.search_version)
    out = build_model(new_cfg, seed=0)
    _copy_encoders(out, model)
    # decoder reads only the original state block
    out.decoder.W.values[...] = 0.0
    out.decoder.W.values[:w] = model.decoder.W.values
    out.decoder.b.values[...] = model.decoder.b.values
    for m, (dc, sc) in enumerate(zip(out.cells, model.cells)):
        dc.wx.W.values[...] = 0.0
        dc.wx.W.values[:, :w] = sc.wx.W.values
        dc.wx.W.values[e : 2 * e, w:] = eps * np.eye(e)  # carry the context slice
        dc.wx.b.values[:w] = sc.wx.b.values
        dc.wx.b.values[w:] = 0.0
        dc.wh.values[...] = 0.0
        dc.wh.values[:w, :w] = sc.wh.values
        ds = out.scores[m]
        ds.W.values[...] = 0.0
        ds.W.values[w:, 0] = A[m] / eps
        ds.b.values[...] = 0.0
    return out


def _probe_modular_gating(model, samples: int = 8, seed: int = 1234):
    """Verify the gating is context-determined and effectively one-hot;
    return the winning module per rule."""
    from .rules import IN_DISTRIBUTION, sample_batch, sample_task

    cfg = model.config
    task = sample_task(cfg.family, cfg.rules, task_seed=seed,
                       search_version=cfg.search_version)
    winners = np.zeros(cfg.rules, dtype=np.int64)
    for r in range(cfg.rules):
        batch = sample_batch(task, samples, "regression", IN_DISTRIBUTION, (seed, r))
        batch.rule_ids[...] = r
        logits = model.forward(batch).gating_logits
        if logits is None:
            raise ModelError("source model exposes no gating logits")
        spread = np.abs(logits - logits[0]).max()
        if spread > 1e-9:
            raise ModelError(
                "witness requires context-determined gating; scores vary with "
                f"the input (spread {spread:.2e})"
            )
        row = logits[0]
        order = np.sort(row)
        if order[-1] - order[-2] < HARD_GATE_GAP:
            raise ModelError(
                "witness requires an effectively one-hot gate "
                f"(logit gap {order[-1] - order[-2]:.2f} < {HARD_GATE_GAP})"
            )
        winners[r] = int(row.argmax())
    return winners


def _modular_to_monolithic_mlp(model):
    """Single trunk reproducing hard context-gated module selection.

    Three hidden layers: (1) per-module selection indicators sharpened by
    relu so unselected gates become exactly 0, plus a +/- relu passthrough of
    the trunk input; (2) a second sharpening making selected gates exactly 1,
    passthrough again; (3) every module's hidden layer, with unselected
    modules' pre-activations pushed to -inf by the exact-zero/one gates. The
    final linear layer sums module heads and gates their biases.
    """
    cfg = model.config
    winners = _probe_modular_gating(model)
    enc = _context_encodings(model)
    M = _onehot_recovery(enc)  # chi = M @ context-encoding is one-hot in the rule
    R, w = cfg.rules, cfg.width
    z_dim = 3 * MLP_ENC_DIM
    c_lo = 2 * MLP_ENC_DIM
    n1 = R + 2 * z_dim
    n2 = R + 2 * z_dim
    n3 = R * w + R
    new_cfg = ModelConfig(level="monolithic", family="mlp", rules=R,
                          width=cfg.width, capacity=cfg.capacity,
                          search_version=cfg.search_version,
                          mono_hidden=(n1, n2, n3))
    out = build_model(new_cfg, seed=0)
    _copy_encoders(out, model)
    _copy_linear(out.decoder, model.decoder)
    l1, l2, l3, l4 = out.trunk.layers

    # psi_m = sum of rule indicators won by module m; g1 = relu(3 psi - 2)
    psi = np.zeros((R, enc.shape[1]))
    for r in range(R):
        psi[winners[r]] += M[r]
    l1.W.values[...] = 0.0
    l1.b.values[...] = 0.0
    l1.W.values[c_lo:z_dim, :R] = 3.0 * psi.T
    l1.b.values[:R] = -2.0
    l1.W.values[:, R : R + z_dim] = np.eye(z_dim)  # z+
    l1.W.values[:, R + z_dim :] = -np.eye(z_dim)  # z-

    # g2 = relu(1 - 3 g1): exactly 1 for unselected modules, exactly 0 for
    # the selected one; passthrough rebuilt from the +/- pair.
    l2.W.values[...] = 0.0
    l2.b.values[...] = 0.0
    l2.W.values[:R, :R] = -3.0 * np.eye(R)
    l2.b.values[:R] = 1.0
    l2.W.values[R : R + z_dim, R : R + z_dim] = np.eye(z_dim)
    l2.W.values[R + z_dim :, R : R + z_dim] = -np.eye(z_dim)
    l2.W.values[R : R + z_dim, R + z_dim :] = -np.eye(z_dim)
    l2.W.values[R + z_dim :, R + z_dim :] = np.eye(z_dim)

    # module hidden layers, gated off by -_GATE_OFF * g2_m; g2 passthrough
    l3.W.values[...] = 0.0
    l3.b.values[...] = 0.0
    for m, (trunk, _, _) in enumerate(model.modules):
        lo = m * w
        l3.W.values[R : R + z_dim, lo : lo + w] = trunk.W.values
        l3.W.values[R + z_dim :, lo : lo + w] = -trunk.W.values
        l3.W.values[m, lo : lo + w] = -_GATE_OFF
        l3.b.values[lo : lo + w] = trunk.b.values
    l3.W.values[:R, R * w :] = np.eye(R)  # g2 passthrough

    # out = sum_m head_m(h_m) with biases gated by (1 - g2_m)
    l4.W.values[...] = 0.0
    l4.b.values[...] = 0.0
    for m, (_, head, _) in enumerate(model.modules):
        lo = m * w
        l4.W.values[lo : lo + w] = head.W.values
        l4.W.values[R * w + m] = -head.b.values
        l4.b.values += head.b.values
    return out


def reduce_level(model):
    """Construct the next-weaker level with the same input-output map.

    Supported constructions:

    * gt_modular -> modular_op: all families.
    * modular_op -> modular: mlp (gate hidden layer embedded in each trunk)
      and rnn (tabulated gate logits carried through extra state units).
    * modular -> monolithic: mlp, for sources whose gating is
      context-determined and effectively one-hot (logit gap >= 35); this is
      what chained reductions produce.

    Constructions reproduce outputs to well under 1e-6 on any batch; the mha
    attention cell has no per-token bypass able to carry the gate computation,
    so its deeper reductions are rejected.
    """
    level = model.config.level
    family = model.config.family
    if level == "gt_modular":
        return _gt_to_modular_op(model)
    if level == "modular_op":
        if family == "mlp":
            return _op_to_modular_mlp(model)
        if family == "rnn":
            return _op_to_modular_rnn(model)
        raise ModelError("modular_op -> modular witness needs a per-token bypass; "
                         "not constructible for the mha cell")
    if level == "modular":
        if family == "mlp":
            return _modular_to_monolithic_mlp(model)
        raise ModelError("modular -> monolithic witness is only constructible "
                         "for the mlp family")
    raise ModelError(f"no weaker level below {level!r}")


# ---------------------------------------------------------------------------
# Checkpoints: JSON manifest plus raw little-endian float64 blobs.
# ---------------------------------------------------------------------------


def save_checkpoint(model, path: str):
    params = model.parameters()
    manifest = {"format": "modbench-checkpoint-v1",
                "config": asdict(model.config),
                "tensors": []}
    offset = 0
    with open(f"{path}.bin", "wb") as fh:
        for p in params:
            blob = p.values.astype("<f8").tobytes()
            fh.write(blob)
            manifest["tensors"].append({
                "name": p.name,
                "shape": list(p.values.shape),
                "offset": offset,
                "count": int(p.values.size),
            })
            offset += len(blob)
    with open(f"{path}.json", "w") as fh:
        json.dump(manifest, fh, indent=1)


def load_checkpoint(path: str):
    with open(f"{path}.json") as fh:
        manifest = json.load(fh)
    cfg_dict = dict(manifest["config"])
    cfg_dict["mono_hidden"] = tuple(cfg_dict.get("mono_hidden", ()))
    config = ModelConfig(**cfg_dict)
    model = build_model(config, seed=0)
    raw = np.fromfile(f"{path}.bin", dtype="<f8")
    params = {p.name: p for p in model.parameters()}
    for entry in manifest["tensors"]:
        p = params[entry["name"]]
        start = entry["offset"] // 8
        p.values[...] = raw[start : start + entry["count"]].reshape(entry["shape"])
    return model
