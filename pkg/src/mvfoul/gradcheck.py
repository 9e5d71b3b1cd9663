"""Finite-difference audit of the model's reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .data import N_FOUL, N_OFF, MultiViewSample
from .model import ModelConfig, VarsModel, batch_loss, init_model, loss_and_grads

KINK_MARGIN = 1e-4


@dataclass
class GradCheck:
    n_views: int
    dim: int
    seed: int
    rel_error: float  # over the concatenated parameter vector
    per_param: dict
    attempts: int


def _random_problem(n_views, dim, rng, encoder, aggregation, batch):
    in_dim = dim + 1 if encoder != "identity" else dim
    cfg = ModelConfig(dim=dim, in_dim=in_dim, encoder=encoder, aggregation=aggregation)
    model = init_model(cfg, int(rng.integers(2**31)))
    # move biases off zero so every parameter gets a generic gradient
    for k, v in model.params.items():
        model.params[k] = v + 0.1 * rng.normal(size=v.shape)
    samples = [
        MultiViewSample(
            f"g{i}", rng.normal(size=(n_views, in_dim)), int(rng.integers(N_FOUL)), int(rng.integers(N_OFF))
        )
        for i in range(batch)
    ]
    return model, samples


def reference_loss(params: dict, samples, config: ModelConfig) -> float:
    """The model's batch loss written directly in numpy, one sample at a time.

    Shares no code with the tape ops so it can serve as an oracle.
    """
    total = 0.0
    for s in samples:
        x = s.views
        if config.encoder == "linear":
            x = x @ params["enc.w1"].T + params["enc.b1"]
        elif config.encoder == "mlp":
            x = np.maximum(x @ params["enc.w1"].T + params["enc.b1"], 0.0)
            x = x @ params["enc.w2"].T + params["enc.b2"]
        if config.aggregation == "mean":
            r = x.mean(axis=0)
        elif config.aggregation == "max":
            r = x.max(axis=0)
        else:
            g = x @ params["attn.W"]
            sim = np.maximum(g @ g.T, 0.0)
            denom = sim.sum()
            a = sim.sum(axis=1) / denom if denom > 1e-12 else np.full(len(x), 1.0 / len(x))
            r = a @ x
        for task, label in (("foul", s.foul), ("off", s.off)):
            h = np.maximum(params[f"{task}.w1"] @ r + params[f"{task}.b1"], 0.0)
            z = params[f"{task}.w2"] @ h + params[f"{task}.b2"]
            m = z.max()
            total += m + np.log(np.exp(z - m).sum()) - z[label]
    return total / len(samples)


def kink_distance(model: VarsModel, samples) -> float:
    """Smallest |input| over every ReLU and max-pool tie gap in the graph."""
    tape = nc.Tape()
    nodes = {k: tape.leaf(v) for k, v in model.params.items()}
    batch_loss(nodes, samples, model.config)
    dist = np.inf
    for rec in tape.records:
        if rec.op == "relu":
            x = tape.values[rec.inputs[0]]
            dist = min(dist, float(np.min(np.abs(x))))
        elif rec.op == "amax":
            x = np.sort(tape.values[rec.inputs[0]], axis=1)
            if x.shape[1] > 1:
                dist = min(dist, float(np.min(x[:, -1] - x[:, -2])))
    return dist


def check_gradients(
    n_views: int,
    dim: int,
    seed: int,
    encoder: str = "mlp",
    aggregation: str = "attention",
    batch: int = 2,
    h: float = 1e-6,
    max_attempts: int = 20,
) -> GradCheck:
    """Analytic vs central-difference gradients of the multitask loss.

    Instances whose ReLU inputs come within ``KINK_MARGIN`` of zero are
    redrawn, since the loss is not differentiable there.
    """
    rng = np.random.default_rng(seed)
    for attempt in range(1, max_attempts + 1):
        model, samples = _random_problem(n_views, dim, rng, encoder, aggregation, batch)
        if kink_distance(model, samples) > KINK_MARGIN:
            break
    else:
        raise RuntimeError(f"no kink-free instance after {max_attempts} draws")
    _, grads = loss_and_grads(model, samples)
    numeric = {}
    for name, p in model.params.items():
        params = dict(model.params)

        def f(x, name=name, params=params):
            params[name] = x
            return reference_loss(params, samples, model.config)

        numeric[name] = nc.numerical_gradient(f, p, h)
    per_param = {k: nc.relative_error(grads[k], numeric[k]) for k in numeric}
    flat_a = np.concatenate([grads[k].ravel() for k in numeric])
    flat_n = np.concatenate([numeric[k].ravel() for k in numeric])
    return GradCheck(n_views, dim, seed, nc.relative_error(flat_a, flat_n), per_param, attempt)


def gradient_suite(seeds=range(20), views=(1, 2, 3, 4), dims=(2, 8, 16), **kw) -> list[GradCheck]:
    return [
        check_gradients(n, d, 1000 * s + 10 * n + d, **kw) for s in seeds for n in views for d in dims
    ]
