"""Multi-view foul classifier: encoder stand-in, view aggregation, two heads.

Parameters live in a flat ``name -> ndarray`` dict so the optimizer, the
gradient checker and the checkpoint format all see the same structure.
"""

from __future__ import annotations

import copy
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import numcore as nc
from .aggregation import AggregationKind, ConfigurationError, init_attention_weights, pool_batch
from .data import N_FOUL, N_OFF
from .numcore import ContractError, ShapeError

CHECKPOINT_FORMAT = "mvfoul-checkpoint"
CHECKPOINT_VERSION = 1

ENCODERS = ("identity", "linear", "mlp")


@dataclass
class ModelConfig:
    dim: int = 16
    in_dim: int | None = None  # input feature width; defaults to dim
    encoder: str = "identity"
    encoder_hidden: int | None = None  # mlp only; defaults to dim
    head_hidden: int | None = None  # defaults to dim
    aggregation: str = "attention"
    w_init: str = "uniform"  # or "identity"

    def __post_init__(self):
        self.in_dim = self.dim if self.in_dim is None else self.in_dim
        self.encoder_hidden = self.dim if self.encoder_hidden is None else self.encoder_hidden
        self.head_hidden = self.dim if self.head_hidden is None else self.head_hidden
        self.aggregation = AggregationKind(self.aggregation).value
        if self.encoder not in ENCODERS:
            raise ConfigurationError(f"encoder must be one of {ENCODERS}, got {self.encoder!r}")
        if self.encoder == "identity" and self.in_dim != self.dim:
            raise ConfigurationError("identity encoder needs in_dim == dim")
        if min(self.dim, self.in_dim, self.encoder_hidden, self.head_hidden) < 1:
            raise ConfigurationError("all widths must be >= 1")


@dataclass
class TrainConfig:
    lr0: float = 5e-5
    decay_factor: float = 0.3
    decay_every: int = 3
    decay_unit: str = "epoch"  # or "step" (per optimizer update)
    batch_size: int = 6
    max_epochs: int = 7
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_weights: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ConfigurationError("lr0 must be > 0")
        if not 0 < self.decay_factor <= 1:
            raise ConfigurationError("decay_factor must lie in (0, 1]")
        if self.batch_size < 1 or self.decay_every < 1 or self.max_epochs < 0:
            raise ConfigurationError("batch_size and decay_every must be >= 1, max_epochs >= 0")
        if self.decay_unit not in ("epoch", "step"):
            raise ConfigurationError(f"decay_unit must be 'epoch' or 'step', got {self.decay_unit!r}")
        if tuple(self.loss_weights) != (1.0, 1.0):
            raise ConfigurationError("task losses are summed unweighted; loss_weights is fixed at (1, 1)")
        self.loss_weights = (1.0, 1.0)


@dataclass
class VarsModel:
    config: ModelConfig
    params: dict = field(default_factory=dict)

    def parameter_census(self) -> dict[str, int]:
        return {k: int(v.size) for k, v in self.params.items()}

    def parameter_count(self) -> int:
        return sum(self.parameter_census().values())

    def aggregation_overhead(self) -> int:
        return int(self.params["attn.W"].size) if "attn.W" in self.params else 0


@dataclass
class Prediction:
    foul_logits: np.ndarray
    off_logits: np.ndarray
    attention: np.ndarray | None = None

    @property
    def foul_class(self) -> int:
        return int(np.argmax(self.foul_logits))  # first maximum wins ties

    @property
    def off_class(self) -> int:
        return int(np.argmax(self.off_logits))


def _uniform(rng, fan_in, shape):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def init_model(config: ModelConfig, seed: int = 0) -> VarsModel:
    rng = np.random.default_rng(seed)
    c = config
    p: dict[str, np.ndarray] = {}
    if c.encoder == "linear":
        p["enc.w1"] = _uniform(rng, c.in_dim, (c.dim, c.in_dim))
        p["enc.b1"] = np.zeros(c.dim)
    elif c.encoder == "mlp":
        p["enc.w1"] = _uniform(rng, c.in_dim, (c.encoder_hidden, c.in_dim))
        p["enc.b1"] = np.zeros(c.encoder_hidden)
        p["enc.w2"] = _uniform(rng, c.encoder_hidden, (c.dim, c.encoder_hidden))
        p["enc.b2"] = np.zeros(c.dim)
    if c.aggregation == AggregationKind.ATTENTION.value:
        p["attn.W"] = init_attention_weights(c.dim, rng, c.w_init)
    for task, k in (("foul", N_FOUL), ("off", N_OFF)):
        p[f"{task}.w1"] = _uniform(rng, c.dim, (c.head_hidden, c.dim))
        p[f"{task}.b1"] = np.zeros(c.head_hidden)
        p[f"{task}.w2"] = _uniform(rng, c.head_hidden, (k, c.head_hidden))
        p[f"{task}.b2"] = np.zeros(k)
    return VarsModel(c, p)


def expected_parameter_count(config: ModelConfig) -> int:
    """Closed-form count from the layer widths, independent of ``init_model``."""
    c = config
    enc = {
        "identity": 0,
        "linear": c.in_dim * c.dim + c.dim,
        "mlp": c.in_dim * c.encoder_hidden + c.encoder_hidden + c.encoder_hidden * c.dim + c.dim,
    }[c.encoder]
    heads = sum(c.dim * c.head_hidden + c.head_hidden + c.head_hidden * k + k for k in (N_FOUL, N_OFF))
    attn = c.dim * c.dim if c.aggregation == "attention" else 0
    return enc + attn + heads


# ------------------------------------------------------------------- forward


def logits_graph(params: dict, views, config: ModelConfig):
    """Logits for a (batch, n_views, in_dim) stack.

    ``params`` values may be arrays or tape nodes; returns
    ``(foul_logits, off_logits, attention)`` with batch as the leading axis.
    """
    c = config
    x = views
    if c.encoder == "linear":
        x = nc.dense_layer(x, params["enc.w1"], params["enc.b1"])
    elif c.encoder == "mlp":
        x = nc.dense_layer(x, params["enc.w1"], params["enc.b1"], "relu")
        x = nc.dense_layer(x, params["enc.w2"], params["enc.b2"])
    R, A = pool_batch(x, c.aggregation, params.get("attn.W"))
    out = []
    for task in ("foul", "off"):
        h = nc.dense_layer(R, params[f"{task}.w1"], params[f"{task}.b1"], "relu")
        out.append(nc.dense_layer(h, params[f"{task}.w2"], params[f"{task}.b2"]))
    return out[0], out[1], A


def _check_input(model: VarsModel, views: np.ndarray):
    if views.ndim != 3 or views.shape[1] < 1 or views.shape[2] != model.config.in_dim:
        raise ShapeError(
            f"expected views of shape (n_views>=1, {model.config.in_dim}), got {views.shape[1:]}"
        )


def forward(model: VarsModel, views) -> Prediction:
    """Predict one action from its (n_views, in_dim) input matrix."""
    v = np.asarray(views, dtype=np.float64)
    if v.ndim != 2:
        raise ShapeError(f"views must be a matrix, got shape {v.shape}")
    v = v[None]
    _check_input(model, v)
    fl, ol, A = logits_graph(model.params, v, model.config)
    return Prediction(fl[0], ol[0], None if A is None else nc.value_of(A)[0])


def _groups(samples):
    """Sample indices grouped by view count, so each group stacks into one array."""
    groups: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        groups.setdefault(s.n_views, []).append(i)
    return groups


def predict(model: VarsModel, samples) -> list[Prediction]:
    preds: list[Prediction | None] = [None] * len(samples)
    for _, idx in sorted(_groups(samples).items()):
        v = np.stack([samples[i].views for i in idx])
        _check_input(model, v)
        fl, ol, A = logits_graph(model.params, v, model.config)
        for row, i in enumerate(idx):
            preds[i] = Prediction(fl[row], ol[row], None if A is None else nc.value_of(A)[row])
    return preds


# ---------------------------------------------------------------------- loss


def cross_entropy(logits, label: int) -> float:
    return float(nc.softmax_cross_entropy(np.asarray(logits, dtype=np.float64), label))


def multitask_loss(pred: Prediction, foul: int, off: int) -> float:
    return cross_entropy(pred.foul_logits, foul) + cross_entropy(pred.off_logits, off)


def batch_loss(params: dict, samples, config: ModelConfig):
    """Mean over the batch of (foul CE + offence CE)."""
    total = None
    for _, idx in sorted(_groups(samples).items()):
        v = np.stack([samples[i].views for i in idx])
        fl, ol, _ = logits_graph(params, v, config)
        part = nc.sum(nc.softmax_cross_entropy(fl, [samples[i].foul for i in idx]))
        part = nc.add(part, nc.sum(nc.softmax_cross_entropy(ol, [samples[i].off for i in idx])))
        total = part if total is None else nc.add(total, part)
    return nc.div(total, float(len(samples)))


def loss_and_grads(model: VarsModel, samples) -> tuple[float, dict]:
    tape = nc.Tape()
    nodes = {k: tape.leaf(v) for k, v in model.params.items()}
    loss = batch_loss(nodes, samples, model.config)
    grads = nc.backward(tape, loss)
    return float(loss.value), {k: grads[n.id] for k, n in nodes.items()}


# ----------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0

    @classmethod
    def zeros_like(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p) for k, p in params.items()}, {k: np.zeros_like(p) for k, p in params.items()})


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam update; returns new ``(params, state)``."""
    t = state.t + 1
    new_p, new_m, new_v = {}, {}, {}
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape or state.m[k].shape != p.shape or state.v[k].shape != p.shape:
            raise ContractError(f"adam: shape mismatch for {k}: param {p.shape}, grad {g.shape}")
        m = beta1 * state.m[k] + (1 - beta1) * g
        v = beta2 * state.v[k] + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        new_p[k] = p - lr * m_hat / (np.sqrt(v_hat) + eps)
        new_m[k], new_v[k] = m, v
    return new_p, AdamState(new_m, new_v, t)


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    return cfg.lr0 * cfg.decay_factor ** (epoch // cfg.decay_every)


# ------------------------------------------------------------------ training


@dataclass
class TrainResult:
    model: VarsModel
    history: list = field(default_factory=list)
    best_epoch: int | None = None


def evaluate_samples(model: VarsModel, samples) -> dict:
    """Loss and accuracies on a sample list (imported lazily to avoid a cycle)."""
    from .metrics import ConfusionMatrix

    preds = predict(model, samples)
    loss = float(np.mean([multitask_loss(p, s.foul, s.off) for p, s in zip(preds, samples)]))
    cm_f = ConfusionMatrix.from_labels([s.foul for s in samples], [p.foul_class for p in preds], N_FOUL)
    cm_o = ConfusionMatrix.from_labels([s.off for s in samples], [p.off_class for p in preds], N_OFF)
    return {
        "loss": loss,
        "foul_acc": cm_f.accuracy(),
        "foul_ba": cm_f.balanced_accuracy(),
        "off_acc": cm_o.accuracy(),
        "off_ba": cm_o.balanced_accuracy(),
    }


def train(model: VarsModel, train_set, val_set, cfg: TrainConfig) -> TrainResult:
    """Minibatch Adam with a stepwise LR decay and best-validation selection.

    The returned model is the epoch with the highest validation offence
    accuracy (earliest on ties). Without a validation set the last epoch is
    kept.
    """
    train_set = list(train_set)
    if not train_set:
        raise ContractError("cannot train on an empty dataset")
    result = TrainResult(copy.deepcopy(model))
    if cfg.max_epochs == 0:
        return result
    rng = np.random.default_rng(cfg.seed)
    params = {k: v.copy() for k, v in model.params.items()}
    state = AdamState.zeros_like(params)
    current = VarsModel(model.config, params)
    best_metric = -np.inf
    for epoch in range(cfg.max_epochs):
        order = rng.permutation(len(train_set))
        batch_losses = []
        lr = lr_at_epoch(cfg, epoch)
        for start in range(0, len(order), cfg.batch_size):
            batch = [train_set[i] for i in order[start : start + cfg.batch_size]]
            loss, grads = loss_and_grads(current, batch)
            if cfg.decay_unit == "step":
                lr = cfg.lr0 * cfg.decay_factor ** (state.t // cfg.decay_every)
            params, state = adam_step(params, grads, state, lr, cfg.beta1, cfg.beta2, cfg.eps)
            current = VarsModel(model.config, params)
            batch_losses.append(loss)
        tr = evaluate_samples(current, train_set)
        row = {
            "epoch": epoch,
            "lr": lr,
            "train_batch_loss": float(np.mean(batch_losses)),
            **{f"train_{k}": v for k, v in tr.items()},
        }
        if val_set:
            row.update({f"val_{k}": v for k, v in evaluate_samples(current, val_set).items()})
            metric = row["val_off_acc"]
        else:
            metric = epoch  # keep the last epoch
        result.history.append(row)
        if metric > best_metric:
            best_metric = metric
            result.best_epoch = epoch
            result.model = VarsModel(model.config, {k: v.copy() for k, v in params.items()})
    return result


# --------------------------------------------------------------- checkpoints


def _to_config(d: dict, cls):
    known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
    if "loss_weights" in known:
        known["loss_weights"] = tuple(known["loss_weights"])
    return cls(**known)


def save_checkpoint(path, model: VarsModel, train_config: TrainConfig | None = None, history=None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "train_config": None if train_config is None else asdict(train_config),
        "params": {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in model.params.items()},
        "history": list(history or []),
    }
    Path(path).write_text(json.dumps(doc, indent=1), encoding="utf-8")


def load_checkpoint(path) -> tuple[VarsModel, TrainConfig | None, list]:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ContractError(f"{path}: not a {CHECKPOINT_FORMAT} file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ContractError(f"{path}: unsupported checkpoint version {doc.get('version')}")
    config = _to_config(doc["model_config"], ModelConfig)
    params = {
        k: np.array(v["data"], dtype=np.float64).reshape(v["shape"]) for k, v in doc["params"].items()
    }
    ref = init_model(config)
    if {k: v.shape for k, v in ref.params.items()} != {k: v.shape for k, v in params.items()}:
        raise ContractError(f"{path}: parameter shapes do not match the stored model config")
    tc = None if doc.get("train_config") is None else _to_config(doc["train_config"], TrainConfig)
    return VarsModel(config, params), tc, doc.get("history", [])
