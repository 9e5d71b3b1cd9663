"""Accuracy vs training-set fraction on the default synthetic split.

Writes sweep.csv (mean and population std per fraction) for plotting with
error bars, plus a manifest.
"""

import argparse
from pathlib import Path

from mvfoul import experiments as ex


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/sweep")
    ap.add_argument("--repeats", type=int, default=10)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--aggregation", default="attention", choices=["mean", "max", "attention"])
    args = ap.parse_args()

    cfg = ex.ExperimentConfig(sweep_repeats=args.repeats)
    cfg.model.aggregation = args.aggregation
    _, (train, val, test) = ex.synthetic_splits(cfg)
    res = ex.run_sweep(train, val, test, cfg.sweep_fractions, cfg.model, cfg.train, cfg.sweep_repeats, args.jobs)

    out = Path(args.out)
    rows = res.summary()
    ex.write_csv(out / "sweep.csv", rows)
    seeds = [cfg.train.seed + r for r in range(cfg.sweep_repeats)]
    ex.write_json(out / "manifest.json", ex.manifest(
        "scripts/run_sweep.py", cfg, seeds, {"train": train, "val": val, "test": test}))
    for r in rows:
        print(f"{r['fraction']:5.2f}  foul {r['foul_mean']:.3f} +/- {r['foul_std']:.3f}"
              f"  off {r['off_mean']:.3f} +/- {r['off_std']:.3f}")


if __name__ == "__main__":
    main()
