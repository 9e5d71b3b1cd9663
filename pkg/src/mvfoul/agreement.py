"""Inter-rater agreement: per-rater accuracy, Cohen's kappa, consensus counts."""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np

from .data import FOUL_TYPES, SEVERITIES
from .numcore import ContractError

TASK_LABELS = {"foul_type": FOUL_TYPES, "offence_severity": SEVERITIES}


class RaterFileError(ValueError):
    pass


@dataclass
class RaterTable:
    action_ids: list
    decisions: np.ndarray  # (n_actions, n_raters) integer codes
    ground_truth: np.ndarray  # (n_actions,)
    raters: list
    labels: tuple
    groups: list | None = None  # one group name per rater

    def __post_init__(self):
        self.decisions = np.asarray(self.decisions, dtype=np.int64)
        self.ground_truth = np.asarray(self.ground_truth, dtype=np.int64)
        n, r = self.decisions.shape
        if self.ground_truth.shape != (n,) or len(self.action_ids) != n or len(self.raters) != r:
            raise ContractError("rater table dimensions are inconsistent")
        k = len(self.labels)
        for arr in (self.decisions, self.ground_truth):
            if arr.size and (arr.min() < 0 or arr.max() >= k):
                raise ContractError(f"decision codes must lie in [0, {k})")
        if self.groups is not None and len(self.groups) != r:
            raise ContractError("need exactly one group label per rater")

    @property
    def n_actions(self) -> int:
        return self.decisions.shape[0]

    @property
    def n_raters(self) -> int:
        return self.decisions.shape[1]

    def group_names(self) -> list:
        if self.groups is None:
            return []
        return list(dict.fromkeys(self.groups))

    def columns(self, group: str | None = None) -> list[int]:
        if group is None:
            return list(range(self.n_raters))
        if self.groups is None or group not in self.groups:
            raise ContractError(f"unknown rater group {group!r}")
        return [i for i, g in enumerate(self.groups) if g == group]


def cohen_kappa(a, b, labels=None) -> float:
    """(p_o - p_e) / (1 - p_e) for two raters over the same items.

    Both raters constant on the same label gives p_e == 1; that pair agrees
    perfectly and scores 1.0.
    """
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise ContractError(f"rater vectors differ in length: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if n == 0:
        raise ContractError("kappa needs at least one item")
    if labels is not None:
        allowed = set(labels)
        bad = (set(a.tolist()) | set(b.tolist())) - allowed
        if bad:
            raise ContractError(f"codes outside the label set: {sorted(bad)}")
    cats = np.union1d(a, b)
    ca = np.array([np.count_nonzero(a == c) for c in cats], dtype=np.int64)
    cb = np.array([np.count_nonzero(b == c) for c in cats], dtype=np.int64)
    agree = int(np.count_nonzero(a == b))
    chance = int(ca @ cb)  # n^2 * p_e
    if chance == n * n:
        return 1.0
    # integer numerator/denominator keep the result symmetric in (a, b)
    return (n * agree - chance) / (n * n - chance)


def pairwise_kappas(table: RaterTable, group: str | None = None) -> dict:
    cols = table.columns(group)
    codes = range(len(table.labels))
    return {
        (table.raters[i], table.raters[j]): cohen_kappa(table.decisions[:, i], table.decisions[:, j], codes)
        for i, j in itertools.combinations(cols, 2)
    }


def average_kappa(table: RaterTable, group: str | None = None) -> float:
    """Unweighted mean of pairwise Cohen's kappa over all rater pairs (Light's kappa)."""
    if len(table.columns(group)) < 2:
        raise ContractError("average kappa needs at least two raters")
    return float(np.mean(list(pairwise_kappas(table, group).values())))


def consensus_histogram(table: RaterTable, group: str | None = None) -> list[float]:
    """Percent of actions with 1, 2, ..., K distinct decisions among the raters."""
    cols = table.columns(group)
    if not cols:
        raise ContractError("empty rater group")
    k = len(table.labels)
    counts = np.zeros(k, dtype=np.int64)
    for row in table.decisions[:, cols]:
        counts[len(set(row.tolist())) - 1] += 1
    if table.n_actions == 0:
        return [0.0] * k
    return (100.0 * counts / table.n_actions).tolist()


def rater_accuracy(table: RaterTable) -> dict:
    if table.n_actions == 0:
        return {r: float("nan") for r in table.raters}
    hits = (table.decisions == table.ground_truth[:, None]).mean(axis=0)
    return {r: float(h) for r, h in zip(table.raters, hits)}


# ---------------------------------------------------------------------- I/O


def _code(cell: str, labels: tuple, where: str) -> int:
    cell = cell.strip()
    if cell.lstrip("-").isdigit():
        code = int(cell)
    else:
        folded = [lab.lower() for lab in labels]
        if cell.lower() not in folded:
            raise RaterFileError(f"{where}: unknown label {cell!r}")
        code = folded.index(cell.lower())
    if not 0 <= code < len(labels):
        raise RaterFileError(f"{where}: code {code} outside 0..{len(labels) - 1}")
    return code


def load_rater_table(path, task: str = "offence_severity", labels=None) -> RaterTable:
    """Parse ``action_id,ground_truth,rater_1,...`` with an optional ``group`` row.

    Cells hold integer codes or label names. ``labels`` overrides the task's
    label set.
    """
    if labels is None:
        if task not in TASK_LABELS:
            raise RaterFileError(f"unknown task {task!r}; expected one of {sorted(TASK_LABELS)}")
        labels = TASK_LABELS[task]
    labels = tuple(labels)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if any(c.strip() for c in r)]
    if not rows:
        raise RaterFileError(f"{path}: empty file")
    header = [c.strip() for c in rows[0]]
    if len(header) < 3 or header[0] != "action_id" or header[1] != "ground_truth":
        raise RaterFileError(f"{path}:1: header must start with action_id,ground_truth,<raters...>")
    raters = header[2:]
    body, groups = rows[1:], None
    if body and body[0][0].strip().lower() == "group":
        groups = [c.strip() for c in body[0][2:]]
        if len(groups) != len(raters) or not all(groups):
            raise RaterFileError(f"{path}:2: group row must name a group for every rater")
        body = body[1:]
    offset = 3 if groups is not None else 2
    ids, truth, decisions = [], [], []
    for lineno, row in enumerate(body, offset):
        if len(row) != len(header):
            raise RaterFileError(f"{path}:{lineno}: expected {len(header)} cells, got {len(row)}")
        where = f"{path}:{lineno}"
        ids.append(row[0].strip())
        truth.append(_code(row[1], labels, where))
        decisions.append([_code(c, labels, where) for c in row[2:]])
    dec = np.array(decisions, dtype=np.int64).reshape(len(body), len(raters))
    return RaterTable(ids, dec, np.array(truth, dtype=np.int64), raters, labels, groups)


def save_rater_table(table: RaterTable, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["action_id", "ground_truth", *table.raters])
        if table.groups is not None:
            w.writerow(["group", "", *table.groups])
        for aid, gt, row in zip(table.action_ids, table.ground_truth, table.decisions):
            w.writerow([aid, int(gt), *map(int, row)])


def simulate_chance_table(n_actions: int, group_sizes: dict, k: int = 4, seed: int = 0, labels=None) -> RaterTable:
    """Raters deciding independently and uniformly at random."""
    rng = np.random.default_rng(seed)
    n_raters = sum(group_sizes.values())
    groups = [g for g, size in group_sizes.items() for _ in range(size)]
    return RaterTable(
        [f"a{i:04d}" for i in range(n_actions)],
        rng.integers(0, k, size=(n_actions, n_raters)),
        rng.integers(0, k, size=n_actions),
        [f"rater_{i + 1}" for i in range(n_raters)],
        tuple(labels) if labels is not None else (SEVERITIES if k == 4 else tuple(str(i) for i in range(k))),
        groups,
    )


def agreement_report(table: RaterTable, groups=None) -> dict:
    names = list(groups) if groups else (table.group_names() or [None])
    out = {"n_actions": table.n_actions, "labels": list(table.labels), "rater_accuracy": rater_accuracy(table), "groups": {}}
    for g in names:
        cols = table.columns(g)
        entry = {"raters": [table.raters[i] for i in cols], "consensus_percent": consensus_histogram(table, g)}
        entry["average_kappa"] = average_kappa(table, g) if len(cols) >= 2 else None
        out["groups"]["all" if g is None else g] = entry
    return out

