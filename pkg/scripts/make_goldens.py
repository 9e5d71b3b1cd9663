"""Freeze reference logits for tests/test_model.py::test_forward_golden.

Run once; rerun only when the forward pass is changed on purpose.
"""

import json
from pathlib import Path

import numpy as np

from mvfoul.model import ModelConfig, forward, init_model

CASES = [
    {"seed": 11, "encoder": "identity", "aggregation": "attention", "dim": 6, "in_dim": 6, "n_views": 3},
    {"seed": 12, "encoder": "mlp", "aggregation": "attention", "dim": 5, "in_dim": 7, "n_views": 4},
    {"seed": 13, "encoder": "linear", "aggregation": "max", "dim": 4, "in_dim": 3, "n_views": 2},
    {"seed": 14, "encoder": "identity", "aggregation": "mean", "dim": 8, "in_dim": 8, "n_views": 5},
]


def main():
    out = []
    for case in CASES:
        cfg = ModelConfig(dim=case["dim"], in_dim=case["in_dim"], encoder=case["encoder"],
                          aggregation=case["aggregation"])
        model = init_model(cfg, case["seed"])
        views = np.random.default_rng(case["seed"] + 1000).normal(size=(case["n_views"], case["in_dim"]))
        pred = forward(model, views)
        out.append({**case, "views": views.tolist(), "foul_logits": pred.foul_logits.tolist(),
                    "off_logits": pred.off_logits.tolist(),
                    "attention": None if pred.attention is None else pred.attention.tolist()})
    path = Path(__file__).resolve().parents[1] / "tests" / "golden" / "forward.json"
    path.write_text(json.dumps(out, indent=1))
    print(f"wrote {len(out)} cases to {path}")


if __name__ == "__main__":
    main()
