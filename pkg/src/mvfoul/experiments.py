"""Experiment protocols: pooling comparison, data-size sweep, attention
inspection and rater agreement, plus the run-directory/manifest plumbing."""

from __future__ import annotations

import csv
import json
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .agreement import agreement_report, load_rater_table
from .aggregation import AggregationKind, ConfigurationError
from .data import (
    FOUL_TYPES,
    N_FOUL,
    N_OFF,
    SEVERITIES,
    SyntheticSpec,
    dataset_hash,
    generate_synthetic,
    split_dataset,
    subsample,
)
from .model import ModelConfig, TrainConfig, VarsModel, evaluate_samples, forward, init_model, train

# Desk-scale recipe for the synthetic data. The TrainConfig defaults (lr 5e-5,
# 7 epochs) assume a pretrained video encoder and barely move a randomly
# initialised head in that budget.
DESK_TRAIN = TrainConfig(lr0=1e-3, decay_factor=0.3, decay_every=10, batch_size=6, max_epochs=30)


@dataclass
class ExperimentConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=lambda: replace(DESK_TRAIN))
    synthetic: SyntheticSpec = field(default_factory=lambda: SyntheticSpec(n_samples=1000))
    split: tuple = (600, 200, 200)
    compare_seeds: tuple = (0, 1, 2, 3, 4)
    compare_kinds: tuple = ("mean", "max", "attention")
    sweep_fractions: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    sweep_repeats: int = 10

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        cfg = cls()
        d = dict(d)
        if "model" in d:
            cfg.model = ModelConfig(**d.pop("model"))
        if "train" in d:
            t = dict(d.pop("train"))
            if "loss_weights" in t:
                t["loss_weights"] = tuple(t["loss_weights"])
            cfg.train = TrainConfig(**{**asdict(DESK_TRAIN), **t})
        if "synthetic" in d:
            cfg.synthetic = SyntheticSpec(**{**asdict(SyntheticSpec(n_samples=1000)), **d.pop("synthetic")})
        for k, v in d.items():
            if k not in cls.__dataclass_fields__:
                raise ConfigurationError(f"unknown config key {k!r}")
            setattr(cfg, k, tuple(v) if isinstance(v, list) else v)
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def synthetic_splits(cfg: ExperimentConfig):
    """Generate the default synthetic dataset and cut it into train/val/test."""
    spec = replace(cfg.synthetic, n_samples=max(cfg.synthetic.n_samples, sum(cfg.split)))
    data = generate_synthetic(spec)
    return data, split_dataset(data.samples, cfg.split)


# ---------------------------------------------------------------- manifests


def manifest(command: str, cfg: ExperimentConfig | None = None, seeds=(), datasets=None, **extra) -> dict:
    return {
        "command": command,
        "artifact": "mvfoul",
        "version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "config": None if cfg is None else cfg.to_dict(),
        "seeds": list(seeds),
        "datasets": {k: dataset_hash(v) for k, v in (datasets or {}).items()},
        **extra,
    }


def write_json(path, obj) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(obj, indent=2, default=_jsonable), encoding="utf-8")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    raise TypeError(f"not JSON serialisable: {type(o)}")


def write_csv(path, rows: list[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if not rows:
            return
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


# ------------------------------------------------------------ single run


def train_and_eval(train_set, val_set, test_set, model_cfg: ModelConfig, train_cfg: TrainConfig, seed: int):
    """Initialise with ``seed``, train with ``seed``, evaluate on ``test_set``."""
    model = init_model(model_cfg, seed)
    result = train(model, train_set, val_set, replace(train_cfg, seed=seed))
    return result, evaluate_samples(result.model, test_set)


# -------------------------------------------------------------- comparison


@dataclass
class ComparisonTable:
    rows: list  # dicts keyed by encoder, pooling, foul_acc, foul_ba, off_acc, off_ba
    runs: dict = field(default_factory=dict)  # (kind, seed) -> (TrainResult, test metrics)

    def row(self, pooling: str) -> dict:
        return next(r for r in self.rows if r["pooling"] == pooling)


def run_comparison(train_set, val_set, test_set, seeds, model_cfg: ModelConfig, train_cfg: TrainConfig,
                   kinds=("mean", "max", "attention")) -> ComparisonTable:
    """One model per (pooling kind, seed) on shared splits; rows average the seeds."""
    table = ComparisonTable([])
    for kind in kinds:
        cfg = replace(model_cfg, aggregation=AggregationKind(kind).value)
        metrics = []
        for seed in seeds:
            result, ev = train_and_eval(train_set, val_set, test_set, cfg, train_cfg, seed)
            table.runs[(cfg.aggregation, seed)] = (result, ev)
            metrics.append(ev)
        table.rows.append(
            {
                "encoder": model_cfg.encoder,
                "pooling": cfg.aggregation,
                "n_seeds": len(metrics),
                **{k: float(np.mean([m[k] for m in metrics])) for k in ("foul_acc", "foul_ba", "off_acc", "off_ba")},
            }
        )
    return table


# ------------------------------------------------------------------- sweep


@dataclass
class SweepResult:
    fractions: list
    accuracies: dict  # fraction -> list of (foul_acc, off_acc), one per repeat
    random_baseline: tuple = (1.0 / N_FOUL, 1.0 / N_OFF)

    def summary(self) -> list[dict]:
        rows = []
        for f in self.fractions:
            acc = np.asarray(self.accuracies[f], dtype=np.float64)
            rows.append(
                {
                    "fraction": f,
                    "repeats": len(acc),
                    "foul_mean": float(acc[:, 0].mean()),
                    "foul_std": float(acc[:, 0].std()),  # population std over repeats
                    "off_mean": float(acc[:, 1].mean()),
                    "off_std": float(acc[:, 1].std()),
                }
            )
        return rows


def _sweep_task(args):
    train_set, val_set, test_set, fraction, repeat, model_cfg, train_cfg = args
    seed = train_cfg.seed + repeat
    subset = subsample(train_set, fraction, seed) if fraction < 1.0 else list(train_set)
    _, ev = train_and_eval(subset, val_set, test_set, model_cfg, train_cfg, seed)
    return ev["foul_acc"], ev["off_acc"]


def run_sweep(train_set, val_set, test_set, fractions, model_cfg: ModelConfig, train_cfg: TrainConfig,
              repeats: int = 10, jobs: int = 1) -> SweepResult:
    """Train ``repeats`` models per training-set fraction; all share one test set.

    Fraction 0 is reported as a uniform random guess (1/K per task). Repeat r
    uses seed ``train_cfg.seed + r`` for the subsample, the init and the
    shuffling, so serial and parallel execution give identical numbers.
    """
    fractions = [float(f) for f in fractions]
    if any(not 0.0 <= f <= 1.0 for f in fractions):
        raise ValueError(f"fractions must lie in [0, 1]: {fractions}")
    baseline = (1.0 / N_FOUL, 1.0 / N_OFF)
    tasks = [
        (train_set, val_set, test_set, f, r, model_cfg, train_cfg) for f in fractions if f > 0 for r in range(repeats)
    ]
    if jobs > 1 and tasks:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outs = list(pool.map(_sweep_task, tasks))
    else:
        outs = [_sweep_task(t) for t in tasks]
    acc: dict = {f: [baseline] * repeats for f in fractions if f == 0}
    for t, out in zip(tasks, outs):
        acc.setdefault(t[3], []).append(out)
    return SweepResult(fractions, acc, baseline)


# ----------------------------------------------------------------- inspect


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max())
    return e / e.sum()


def inspect_action(model: VarsModel, sample) -> dict:
    """Per-view attention (percent), view ranking and both predictions."""
    if model.config.aggregation != AggregationKind.ATTENTION.value:
        raise ConfigurationError("inspect needs a model with attention pooling")
    pred = forward(model, sample.views)
    pct = pred.attention * 100.0
    pf, po = _softmax(pred.foul_logits), _softmax(pred.off_logits)
    return {
        "action_id": sample.action_id,
        "attention_percent": pct.tolist(),
        "view_ranking": [int(i) for i in np.argsort(-pct, kind="stable")],
        "foul": {"class": pred.foul_class, "label": FOUL_TYPES[pred.foul_class],
                 "confidence": float(pf[pred.foul_class]), "probabilities": pf.tolist(),
                 "truth": FOUL_TYPES[sample.foul]},
        "offence": {"class": pred.off_class, "label": SEVERITIES[pred.off_class],
                    "confidence": float(po[pred.off_class]), "probabilities": po.tolist(),
                    "truth": SEVERITIES[sample.off]},
    }


def top_k_hit_rate(model: VarsModel, samples, informative: np.ndarray) -> float:
    """Share of samples whose informative views hold the top attention ranks."""
    hits = 0
    for s, mask in zip(samples, informative):
        k = int(mask.sum())
        ranking = inspect_action(model, s)["view_ranking"]
        hits += set(ranking[:k]) == set(np.flatnonzero(mask).tolist())
    return hits / len(samples)


# --------------------------------------------------------------- agreement


def run_agreement(rater_file, task: str = "offence_severity", groups=None, labels=None) -> dict:
    table = load_rater_table(rater_file, task, labels)
    report = agreement_report(table, groups)
    report["task"] = task
    return report
