"""Command line entry point: ``mvfoul <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import experiments as ex
from .data import N_FOUL, N_OFF, load_dataset, save_dataset
from .gradcheck import gradient_suite
from .metrics import ConfusionMatrix, report
from .model import init_model, load_checkpoint, predict, save_checkpoint, train

log = logging.getLogger("mvfoul")


def _config(args) -> ex.ExperimentConfig:
    cfg = ex.ExperimentConfig.load(args.config) if args.config else ex.ExperimentConfig()
    if args.seed is not None:
        cfg.train = replace(cfg.train, seed=args.seed)
        cfg.synthetic = replace(cfg.synthetic, seed=args.seed)
    for name in ("epochs", "lr", "batch_size"):
        val = getattr(args, name, None)
        if val is not None:
            key = {"epochs": "max_epochs", "lr": "lr0"}.get(name, name)
            cfg.train = replace(cfg.train, **{key: val})
    if getattr(args, "aggregation", None):
        cfg.model = replace(cfg.model, aggregation=args.aggregation)
    if getattr(args, "encoder", None):
        cfg.model = replace(cfg.model, encoder=args.encoder)
    return cfg


def _splits(args, cfg):
    """train/val/test from --data DIR, explicit files, or fresh synthetic data."""
    if getattr(args, "data", None):
        d = Path(args.data)
        return [load_dataset(d / f"{name}.jsonl") for name in ("train", "val", "test")]
    if getattr(args, "train", None):
        return [load_dataset(p) if p else [] for p in (args.train, args.val, args.test)]
    log.info("no data given; generating the synthetic dataset from the config")
    _, splits = ex.synthetic_splits(cfg)
    return splits


def _align_dims(cfg, train_set):
    if train_set and cfg.model.in_dim != train_set[0].dim:
        dim = train_set[0].dim if cfg.model.encoder == "identity" else cfg.model.dim
        cfg.model = replace(cfg.model, dim=dim, in_dim=train_set[0].dim)
    return cfg


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_gen_synthetic(args):
    cfg = _config(args)
    if args.n_samples:
        cfg.synthetic = replace(cfg.synthetic, n_samples=args.n_samples)
    if args.split:
        cfg.split = tuple(int(x) for x in args.split.split(","))
    data, splits = ex.synthetic_splits(cfg)
    out = _out(args)
    names = ("train", "val", "test")
    for name, part in zip(names, splits):
        save_dataset(part, out / f"{name}.jsonl")
    meta = data.metadata()
    start = 0
    for name, part in zip(names, splits):
        meta[f"{name}_informative_views"] = meta["informative_views"][start : start + len(part)]
        start += len(part)
    del meta["informative_views"]
    ex.write_json(out / "meta.json", meta)
    ex.write_json(out / "manifest.json", ex.manifest("gen-synthetic", cfg, [cfg.synthetic.seed], dict(zip(names, splits))))
    print(f"wrote {', '.join(f'{len(p)} {n}' for n, p in zip(names, splits))} samples to {out}")


def cmd_train(args):
    cfg = _config(args)
    train_set, val_set, test_set = _splits(args, cfg)
    cfg = _align_dims(cfg, train_set)
    out = _out(args)
    model = init_model(cfg.model, cfg.train.seed)
    result = train(model, train_set, val_set, cfg.train)
    save_checkpoint(out / "checkpoint.json", result.model, cfg.train, result.history)
    ex.write_csv(out / "history.csv", result.history)
    metrics = {"best_epoch": result.best_epoch, "parameter_count": result.model.parameter_count(),
               "attention_overhead": result.model.aggregation_overhead()}
    if test_set:
        metrics["test"] = _eval_reports(result.model, test_set)
    ex.write_json(out / "metrics.json", metrics)
    ex.write_json(out / "manifest.json", ex.manifest("train", cfg, [cfg.train.seed],
                                                     {"train": train_set, "val": val_set, "test": test_set}))
    print(json.dumps(metrics, indent=2))


def _eval_reports(model, samples) -> dict:
    preds = predict(model, samples)
    return {
        "foul_type": report(ConfusionMatrix.from_labels([s.foul for s in samples], [p.foul_class for p in preds], N_FOUL)),
        "offence_severity": report(ConfusionMatrix.from_labels([s.off for s in samples], [p.off_class for p in preds], N_OFF)),
    }


def cmd_eval(args):
    model, _, _ = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.dataset)
    metrics = _eval_reports(model, samples)
    if args.out:
        out = _out(args)
        ex.write_json(out / "metrics.json", metrics)
        ex.write_json(out / "manifest.json", ex.manifest("eval", None, [], {"eval": samples}, checkpoint=str(args.checkpoint)))
    print(json.dumps({k: {m: v[m] for m in ("accuracy", "balanced_accuracy")} for k, v in metrics.items()}, indent=2))


def cmd_compare(args):
    cfg = _config(args)
    if args.seeds:
        cfg.compare_seeds = tuple(range(args.seeds))
    if args.kinds:
        cfg.compare_kinds = tuple(args.kinds.split(","))
    train_set, val_set, test_set = _splits(args, cfg)
    cfg = _align_dims(cfg, train_set)
    table = ex.run_comparison(train_set, val_set, test_set, cfg.compare_seeds, cfg.model, cfg.train, cfg.compare_kinds)
    out = _out(args)
    ex.write_csv(out / "comparison.csv", table.rows)
    ex.write_json(out / "comparison.json", table.rows)
    ex.write_json(out / "manifest.json", ex.manifest(
        "compare", cfg, cfg.compare_seeds, {"train": train_set, "val": val_set, "test": test_set},
        note=f"each row is the mean over {len(cfg.compare_seeds)} seeds"))
    for r in table.rows:
        print(f"{r['encoder']:>8} {r['pooling']:>9}  foul acc {r['foul_acc']:.3f} ba {r['foul_ba']:.3f}"
              f"  off acc {r['off_acc']:.3f} ba {r['off_ba']:.3f}")


def cmd_sweep(args):
    cfg = _config(args)
    if args.fractions:
        cfg.sweep_fractions = tuple(float(x) for x in args.fractions.split(","))
    if args.repeats:
        cfg.sweep_repeats = args.repeats
    train_set, val_set, test_set = _splits(args, cfg)
    cfg = _align_dims(cfg, train_set)
    res = ex.run_sweep(train_set, val_set, test_set, cfg.sweep_fractions, cfg.model, cfg.train,
                       cfg.sweep_repeats, args.jobs)
    out = _out(args)
    rows = res.summary()
    ex.write_csv(out / "sweep.csv", rows)
    ex.write_json(out / "sweep.json", {"summary": rows, "runs": {str(k): v for k, v in res.accuracies.items()},
                                       "random_baseline": res.random_baseline})
    seeds = [cfg.train.seed + r for r in range(cfg.sweep_repeats)]
    ex.write_json(out / "manifest.json", ex.manifest("sweep", cfg, seeds, {"train": train_set, "val": val_set, "test": test_set}))
    for r in rows:
        print(f"{r['fraction']:5.2f}  foul {r['foul_mean']:.3f} ± {r['foul_std']:.3f}  off {r['off_mean']:.3f} ± {r['off_std']:.3f}")


def cmd_inspect(args):
    model, _, _ = load_checkpoint(args.checkpoint)
    samples = load_dataset(args.dataset)
    if args.action_id:
        chosen = [s for s in samples if s.action_id == args.action_id]
        if not chosen:
            raise SystemExit(f"action {args.action_id!r} not found in {args.dataset}")
    else:
        chosen = samples[args.index : args.index + args.count]
    reports = [ex.inspect_action(model, s) for s in chosen]
    if args.out:
        ex.write_json(_out(args) / "inspect.json", reports)
    for r in reports:
        views = "  ".join(f"view {i + 1}: {p:5.1f}%" for i, p in enumerate(r["attention_percent"]))
        print(f"{r['action_id']}  {views}")
        print(f"    foul: {r['foul']['label']} ({r['foul']['confidence']:.2f}) truth {r['foul']['truth']}")
        print(f"    offence: {r['offence']['label']} ({r['offence']['confidence']:.2f}) truth {r['offence']['truth']}")


def cmd_agree(args):
    groups = args.groups.split(",") if args.groups else None
    labels = args.labels.split(",") if args.labels else None
    rep = ex.run_agreement(args.raters, args.task, groups, labels)
    if args.out:
        out = _out(args)
        ex.write_json(out / "agreement.json", rep)
        ex.write_json(out / "manifest.json", ex.manifest("agree", None, [], rater_file=str(args.raters), task=args.task))
    print(json.dumps(rep, indent=2))


def cmd_gradcheck(args):
    views = tuple(int(x) for x in args.views.split(","))
    dims = tuple(int(x) for x in args.dims.split(","))
    base = args.seed or 0
    checks = gradient_suite(seeds=range(base, base + args.seeds), views=views, dims=dims,
                            encoder=args.encoder, aggregation=args.aggregation)
    worst = max(c.rel_error for c in checks)
    rows = [{"n_views": c.n_views, "dim": c.dim, "seed": c.seed, "rel_error": c.rel_error} for c in checks]
    if args.out:
        out = _out(args)
        ex.write_csv(out / "gradcheck.csv", rows)
        ex.write_json(out / "manifest.json", ex.manifest("gradcheck", None, [r["seed"] for r in rows], tolerance=args.tol))
    print(f"{len(checks)} instances, worst relative error {worst:.3e} (tolerance {args.tol:g})")
    return 0 if worst < args.tol else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mvfoul", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, data=True):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", default="runs/latest", help="run directory")
        if data:
            sp.add_argument("--data", help="directory holding train/val/test.jsonl")
            sp.add_argument("--train")
            sp.add_argument("--val")
            sp.add_argument("--test")
            sp.add_argument("--aggregation", choices=["mean", "max", "attention"])
            sp.add_argument("--encoder", choices=["identity", "linear", "mlp"])
            sp.add_argument("--epochs", type=int)
            sp.add_argument("--lr", type=float)
            sp.add_argument("--batch-size", type=int)

    sp = sub.add_parser("gen-synthetic", help="write a planted-structure dataset")
    common(sp, data=False)
    sp.add_argument("--n-samples", type=int)
    sp.add_argument("--split", help="comma separated train,val,test sizes")
    sp.set_defaults(func=cmd_gen_synthetic)

    sp = sub.add_parser("train", help="train one model")
    common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    common(sp, data=False)
    sp.add_argument("checkpoint")
    sp.add_argument("dataset")
    sp.set_defaults(func=cmd_eval, out=None)

    sp = sub.add_parser("compare", help="mean / max / attention pooling over seeds")
    common(sp)
    sp.add_argument("--seeds", type=int, help="number of seeds (0..n-1)")
    sp.add_argument("--kinds", help="comma separated pooling kinds")
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="accuracy vs training-set fraction")
    common(sp)
    sp.add_argument("--fractions")
    sp.add_argument("--repeats", type=int)
    sp.add_argument("--jobs", type=int, default=1)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("inspect", help="per-view attention for individual actions")
    common(sp, data=False)
    sp.add_argument("checkpoint")
    sp.add_argument("dataset")
    sp.add_argument("--action-id")
    sp.add_argument("--index", type=int, default=0)
    sp.add_argument("--count", type=int, default=1)
    sp.set_defaults(out=None, func=cmd_inspect)

    sp = sub.add_parser("agree", help="inter-rater agreement from a rater CSV")
    common(sp, data=False)
    sp.add_argument("raters")
    sp.add_argument("--task", default="offence_severity", choices=["offence_severity", "foul_type"])
    sp.add_argument("--groups", help="comma separated subset of rater groups")
    sp.add_argument("--labels", help="explicit comma separated label set")
    sp.set_defaults(out=None, func=cmd_agree)

    sp = sub.add_parser("gradcheck", help="finite-difference audit of the gradients")
    common(sp, data=False)
    sp.add_argument("--seeds", type=int, default=20)
    sp.add_argument("--views", default="1,2,3,4")
    sp.add_argument("--dims", default="2,8,16")
    sp.add_argument("--encoder", default="mlp", choices=["identity", "linear", "mlp"])
    sp.add_argument("--aggregation", default="attention", choices=["mean", "max", "attention"])
    sp.add_argument("--tol", type=float, default=1e-5)
    sp.set_defaults(out=None, func=cmd_gradcheck)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return args.func(args) or 0


if __name__ == "__main__":
    sys.exit(main())
