"""Samples, label taxonomy, JSON-lines dataset files and synthetic generators."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

FOUL_TYPES = (
    "Standing tackling",
    "Tackling",
    "High leg",
    "Pushing",
    "Holding",
    "Elbowing",
    "Challenge",
    "Dive/Simulation",
)
SEVERITIES = (
    "No offence",
    "Offence + No card",
    "Offence + Yellow card",
    "Offence + Red card",
)
N_FOUL = len(FOUL_TYPES)
N_OFF = len(SEVERITIES)

# stand-in imbalance: many standing tackles and tackles, few dives / red cards
DEFAULT_FOUL_FREQ = (0.35, 0.25, 0.05, 0.10, 0.10, 0.05, 0.07, 0.03)
DEFAULT_OFF_FREQ = (0.25, 0.45, 0.25, 0.05)

GENERATOR_NAME = "numpy.random.default_rng(PCG64)"


class DatasetError(ValueError):
    pass


@dataclass
class MultiViewSample:
    action_id: str
    views: np.ndarray  # (n_views, dim)
    foul: int
    off: int

    def __post_init__(self):
        self.views = np.asarray(self.views, dtype=np.float64)
        if self.views.ndim != 2 or self.views.shape[0] < 1 or self.views.shape[1] < 1:
            raise DatasetError(f"{self.action_id}: views must be a non-empty matrix, got {self.views.shape}")
        if not np.all(np.isfinite(self.views)):
            raise DatasetError(f"{self.action_id}: non-finite feature value")
        if not (isinstance(self.foul, (int, np.integer)) and 0 <= self.foul < N_FOUL):
            raise DatasetError(f"{self.action_id}: unknown foul label {self.foul!r}")
        if not (isinstance(self.off, (int, np.integer)) and 0 <= self.off < N_OFF):
            raise DatasetError(f"{self.action_id}: unknown offence label {self.off!r}")
        self.foul, self.off = int(self.foul), int(self.off)

    @property
    def n_views(self) -> int:
        return self.views.shape[0]

    @property
    def dim(self) -> int:
        return self.views.shape[1]

    def __eq__(self, other):
        if not isinstance(other, MultiViewSample):
            return NotImplemented
        return (
            self.action_id == other.action_id
            and self.foul == other.foul
            and self.off == other.off
            and np.array_equal(self.views, other.views)
        )


def _record(s: MultiViewSample) -> dict:
    return {"action_id": s.action_id, "foul": s.foul, "off": s.off, "views": s.views.tolist()}


def dumps_dataset(samples) -> str:
    return "".join(json.dumps(_record(s), separators=(",", ":")) + "\n" for s in samples)


def save_dataset(samples, path) -> None:
    Path(path).write_text(dumps_dataset(samples), encoding="utf-8")


def load_dataset(path) -> list[MultiViewSample]:
    """Read a JSON-lines dataset, validating labels and feature dimensions."""
    samples: list[MultiViewSample] = []
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"{path}:{lineno}: invalid JSON ({exc.msg})") from None
            missing = {"action_id", "foul", "off", "views"} - set(rec)
            if missing:
                raise DatasetError(f"{path}:{lineno}: missing keys {sorted(missing)}")
            try:
                views = np.array(rec["views"], dtype=np.float64)
                s = MultiViewSample(str(rec["action_id"]), views, rec["foul"], rec["off"])
            except (DatasetError, ValueError, TypeError) as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
            if dim is None:
                dim = s.dim
            elif s.dim != dim:
                raise DatasetError(f"{path}:{lineno}: feature dim {s.dim} differs from {dim}")
            samples.append(s)
    return samples


def dataset_hash(samples) -> str:
    return hashlib.sha256(dumps_dataset(samples).encode()).hexdigest()


def split_dataset(samples, sizes):
    """Consecutive slices of the given sizes (e.g. train/val/test)."""
    if sum(sizes) > len(samples):
        raise DatasetError(f"split sizes {sizes} exceed {len(samples)} samples")
    out, start = [], 0
    for n in sizes:
        out.append(list(samples[start : start + n]))
        start += n
    return out


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def subsample(samples, fraction: float, seed: int) -> list:
    """Stratified (by foul label) draw of round(fraction * N) samples.

    Per-class quotas use largest remainders, so each class gets within one of
    ``fraction * class_count``. Original order is preserved.
    """
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")
    n = len(samples)
    target = _round_half_up(fraction * n)
    by_class: dict[int, list[int]] = {}
    for i, s in enumerate(samples):
        by_class.setdefault(s.foul, []).append(i)
    classes = sorted(by_class)
    exact = {c: fraction * len(by_class[c]) for c in classes}
    quota = {c: math.floor(exact[c]) for c in classes}
    short = target - sum(quota.values())
    # largest remainder first, ties by class code
    for c in sorted(classes, key=lambda c: (-(exact[c] - quota[c]), c))[: max(short, 0)]:
        quota[c] += 1
    rng = np.random.default_rng(seed)
    keep: list[int] = []
    for c in classes:
        idx = by_class[c]
        keep.extend(idx[j] for j in rng.choice(len(idx), size=quota[c], replace=False))
    return [samples[i] for i in sorted(keep)]


@dataclass
class SyntheticSpec:
    n_samples: int = 600
    views_per_sample: int = 4
    n_informative_views: int = 2
    dim: int = 16
    class_separation: float = 3.0
    noise_sigma: float = 0.5
    seed: int = 0
    foul_frequencies: tuple = DEFAULT_FOUL_FREQ
    off_frequencies: tuple = DEFAULT_OFF_FREQ

    def __post_init__(self):
        if not 1 <= self.n_informative_views <= self.views_per_sample:
            raise ValueError("need 1 <= n_informative_views <= views_per_sample")
        if self.class_separation <= 0 or self.noise_sigma < 0:
            raise ValueError("class_separation must be > 0 and noise_sigma >= 0")
        if len(self.foul_frequencies) != N_FOUL or len(self.off_frequencies) != N_OFF:
            raise ValueError("frequency vectors must have 8 (foul) and 4 (offence) entries")
        self.foul_frequencies = tuple(float(x) for x in self.foul_frequencies)
        self.off_frequencies = tuple(float(x) for x in self.off_frequencies)


@dataclass
class SyntheticData:
    samples: list
    informative: np.ndarray  # (n_samples, views_per_sample) bool
    class_means: np.ndarray  # (8, 4, dim)
    spec: SyntheticSpec = field(default_factory=SyntheticSpec)

    def metadata(self) -> dict:
        return {
            "generator": GENERATOR_NAME,
            "seed": self.spec.seed,
            "spec": asdict(self.spec),
            "informative_views": [np.flatnonzero(m).tolist() for m in self.informative],
        }


def class_means(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    """Mean feature vector for each (foul, offence) pair.

    A shared action prototype (norm about sep * sqrt(d)) plus additive foul
    and offence offsets (norm about sep each). The prototype makes informative
    views of one action resemble each other; the offsets carry the labels.
    """
    d, sep = spec.dim, spec.class_separation
    prototype = rng.normal(0.0, sep, size=d)
    foul_off = rng.normal(0.0, sep / np.sqrt(d), size=(N_FOUL, d))
    sev_off = rng.normal(0.0, sep / np.sqrt(d), size=(N_OFF, d))
    return prototype + foul_off[:, None, :] + sev_off[None, :, :]


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Planted-structure multi-view data.

    Informative views are the class mean plus N(0, sigma^2) noise. The other
    views are isotropic noise rescaled to the mean norm of that action's
    informative views, so no view can be spotted by its scale alone.
    """
    rng = np.random.default_rng(spec.seed)
    means = class_means(spec, rng)
    fp = np.asarray(spec.foul_frequencies) / np.sum(spec.foul_frequencies)
    op = np.asarray(spec.off_frequencies) / np.sum(spec.off_frequencies)
    n, v, k, d = spec.n_samples, spec.views_per_sample, spec.n_informative_views, spec.dim
    fouls = rng.choice(N_FOUL, size=n, p=fp)
    offs = rng.choice(N_OFF, size=n, p=op)
    mask = np.zeros((n, v), dtype=bool)
    samples = []
    for i in range(n):
        pos = np.sort(rng.choice(v, size=k, replace=False))
        mask[i, pos] = True
        mu = means[fouls[i], offs[i]]
        views = np.empty((v, d))
        views[pos] = mu + spec.noise_sigma * rng.normal(size=(k, d))
        scale = np.linalg.norm(views[pos], axis=1).mean()
        for j in np.flatnonzero(~mask[i]):
            z = rng.normal(size=d)
            views[j] = z * (scale / np.linalg.norm(z))
        samples.append(MultiViewSample(f"syn-{spec.seed}-{i:05d}", views, int(fouls[i]), int(offs[i])))
    return SyntheticData(samples, mask, means, spec)


def nearest_mean_accuracy(data: SyntheticData) -> tuple[float, float]:
    """Oracle: classify the average informative view by the nearest class mean."""
    flat = data.class_means.reshape(-1, data.class_means.shape[-1])
    hit_foul = hit_off = 0
    for s, m in zip(data.samples, data.informative):
        x = s.views[m].mean(axis=0)
        best = int(np.argmin(np.linalg.norm(flat - x, axis=1)))
        hit_foul += best // N_OFF == s.foul
        hit_off += best % N_OFF == s.off
    n = len(data.samples)
    return hit_foul / n, hit_off / n
