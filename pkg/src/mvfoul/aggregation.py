"""View aggregation: similarity attention and the mean/max pooling baselines.

Rows of a feature matrix are views. The attention block scores each view by
how strongly it resembles the others (itself included) under a learned
projection, then returns the score-weighted sum of the view rows.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import numcore as nc
from .numcore import ContractError, ShapeError

EPS = 1e-12


class AggregationKind(str, enum.Enum):
    MEAN = "mean"
    MAX = "max"
    ATTENTION = "attention"


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class Degenerate:
    """Marker returned by ``normalize_similarity`` when ReLU(S) sums to ~0."""

    n_views: int


def _check_views(f) -> tuple[int, int]:
    shape = nc.value_of(f).shape
    if len(shape) < 2 or shape[-2] < 1 or shape[-1] < 1:
        raise ShapeError(f"feature matrix must be (n_views, dim) with n, d >= 1, got {shape}")
    return shape[-2], shape[-1]


def similarity(f, W):
    """S = (f W)(f W)^T, an n x n matrix of projected dot products."""
    _, d = _check_views(f)
    ws = nc.value_of(W).shape
    if ws != (d, d):
        raise ShapeError(f"W must be {(d, d)} for feature dim {d}, got {ws}")
    g = nc.matmul(f, W)
    return nc.matmul(g, nc.transpose(g))


def normalize_similarity(S):
    """ReLU(S) divided by its total, or ``Degenerate`` if that total is <= EPS."""
    s = nc.value_of(S)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise ShapeError(f"similarity matrix must be square, got {s.shape}")
    r = nc.relu(S)
    total = nc.sum(r)
    if nc.value_of(total) <= EPS:
        return Degenerate(s.shape[0])
    return nc.div(r, total)


def attention_scores(N):
    """Row sums of the normalized similarity; uniform for a degenerate input."""
    if isinstance(N, Degenerate):
        return np.full(N.n_views, 1.0 / N.n_views)
    return nc.sum(N, axis=1)


def aggregate(f, A):
    """R_k = sum_j A_j f[j, k]."""
    n, d = _check_views(f)
    a = nc.value_of(A)
    if a.shape != (n,):
        raise ShapeError(f"attention of shape {a.shape} does not match {n} views")
    return nc.reshape(nc.matmul(nc.reshape(A, (1, n)), f), (d,))


def pool(f, kind: AggregationKind | str, W=None):
    """Reduce one (n_views, dim) feature matrix to a dim-vector.

    Returns ``(R, A)``; ``A`` is None except for attention pooling.
    """
    kind = AggregationKind(kind)
    _check_views(f)
    if kind is AggregationKind.MEAN:
        return nc.mean(f, axis=0), None
    if kind is AggregationKind.MAX:
        return nc.amax(f, axis=0), None
    if W is None:
        raise ConfigurationError("attention pooling needs a d x d weight matrix W")
    A = attention_scores(normalize_similarity(similarity(f, W)))
    return aggregate(f, A), A


def pool_batch(f, kind: AggregationKind | str, W=None):
    """``pool`` over a (batch, n_views, dim) stack with a per-sample fallback.

    Used by the model; agrees with ``pool`` applied sample by sample.
    """
    kind = AggregationKind(kind)
    fv = nc.value_of(f)
    if fv.ndim != 3:
        raise ShapeError(f"expected (batch, n_views, dim), got {fv.shape}")
    n = fv.shape[1]
    if kind is AggregationKind.MEAN:
        return nc.mean(f, axis=1), None
    if kind is AggregationKind.MAX:
        return nc.amax(f, axis=1), None
    if W is None:
        raise ConfigurationError("attention pooling needs a d x d weight matrix W")
    r = nc.relu(similarity(f, W))
    total = nc.sum(nc.sum(r, axis=2), axis=1)  # (B,)
    degenerate = nc.value_of(total) <= EPS
    safe = nc.where(degenerate, 1.0, total)
    A = nc.sum(nc.div(r, nc.reshape(safe, (-1, 1, 1))), axis=2)  # (B, n)
    A = nc.where(degenerate[:, None], 1.0 / n, A)
    R = nc.matmul(nc.reshape(A, (fv.shape[0], 1, n)), f)
    return nc.reshape(R, (fv.shape[0], fv.shape[2])), A


def parameter_overhead(kind: AggregationKind | str, dim: int) -> int:
    """Extra trainable parameters the aggregation block adds (d^2 for attention)."""
    return dim * dim if AggregationKind(kind) is AggregationKind.ATTENTION else 0


def init_attention_weights(dim: int, rng: np.random.Generator, scheme: str = "uniform") -> np.ndarray:
    """Fan-in uniform on [-1/sqrt(d), 1/sqrt(d)], or the identity."""
    if scheme == "identity":
        return np.eye(dim)
    if scheme != "uniform":
        raise ConfigurationError(f"unknown W init scheme {scheme!r}")
    bound = 1.0 / np.sqrt(dim)
    return rng.uniform(-bound, bound, size=(dim, dim))


__all__ = [
    "EPS",
    "AggregationKind",
    "ConfigurationError",
    "ContractError",
    "Degenerate",
    "similarity",
    "normalize_similarity",
    "attention_scores",
    "aggregate",
    "pool",
    "pool_batch",
    "parameter_overhead",
    "init_attention_weights",
]
