"""Similarity measures, the perturbation bias score and evaluation statistics.

Sums go through :func:`math.fsum` so results do not depend on reduction
order (and therefore not on how work was split across threads).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import MetricError, UndefinedCorrelationError


class SimilarityKind(str, enum.Enum):
    COSINE = "cosine"
    EUCLIDEAN = "euclidean"


def _pair(a, b) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise MetricError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def cosine(a, b) -> float:
    """Cosine similarity; 0.0 if either vector is zero, exactly 1.0 for identical vectors."""
    a, b = _pair(a, b)
    na = math.sqrt(math.fsum(a * a))
    nb = math.sqrt(math.fsum(b * b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    if np.array_equal(a, b):
        return 1.0
    value = math.fsum(a * b) / (na * nb)
    return min(1.0, max(-1.0, value))


def euclidean(a, b) -> float:
    a, b = _pair(a, b)
    d = a - b
    return math.sqrt(math.fsum(d * d))


def similarity(kind: SimilarityKind | str, a, b) -> float:
    return cosine(a, b) if SimilarityKind(kind) == SimilarityKind.COSINE else euclidean(a, b)


def pairwise_mean(embs: Sequence, kind: SimilarityKind | str = SimilarityKind.COSINE) -> tuple[float, list[float]]:
    """Mean similarity over the K(K-1)/2 unordered pairs of ``embs``.

    Pairs are listed as (0,1), (0,2), ..., (K-2,K-1).
    """
    k = len(embs)
    if k < 2:
        raise MetricError(f"need at least 2 embeddings, got {k}")
    sims = [similarity(kind, embs[i], embs[j]) for i in range(k) for j in range(i + 1, k)]
    return math.fsum(sims) / len(sims), sims


@dataclass(frozen=True)
class BiasScore:
    mean: float
    standard_error: float
    pair_count: int
    sample_count: int
    k: int


def _pairs_to_k(n_pairs: int) -> int:
    k = int(round((1 + math.sqrt(1 + 8 * n_pairs)) / 2))
    if k * (k - 1) // 2 != n_pairs:
        raise MetricError(f"{n_pairs} is not a pair count K(K-1)/2")
    return k


def _mean_se(values: Sequence[float]) -> tuple[float, float]:
    n = len(values)
    mean = math.fsum(values) / n
    if n < 2:
        return mean, 0.0
    var = math.fsum((v - mean) ** 2 for v in values) / (n - 1)
    return mean, math.sqrt(var) / math.sqrt(n)


def bias_score(per_sample_pair_sims: Sequence[Sequence[float]], se_over: str = "pairs") -> BiasScore:
    """Aggregate per-sample pair similarities into mean and standard error.

    ``se_over="pairs"`` pools all N*K(K-1)/2 values; ``"samples"`` uses the
    spread of the N per-sample means instead. The mean is the pooled mean
    either way.
    """
    if not per_sample_pair_sims:
        raise MetricError("no samples to aggregate")
    lengths = {len(s) for s in per_sample_pair_sims}
    if len(lengths) != 1 or 0 in lengths:
        raise MetricError(f"samples must share one non-zero pair count, got {sorted(lengths)}")
    n_pairs = lengths.pop()
    k = _pairs_to_k(n_pairs)
    flat = [v for s in per_sample_pair_sims for v in s]
    mean, se = _mean_se(flat)
    if se_over == "samples":
        _, se = _mean_se([math.fsum(s) / n_pairs for s in per_sample_pair_sims])
    elif se_over != "pairs":
        raise ValueError(f"se_over must be 'pairs' or 'samples', got {se_over!r}")
    return BiasScore(mean, se, len(flat), len(per_sample_pair_sims), k)


@dataclass(frozen=True)
class ScoredPair:
    score: float
    label: int


def auc_roc(pairs: Sequence[ScoredPair]) -> float:
    """Probability that a random positive outscores a random negative (ties count half).

    Computed from the Mann-Whitney rank sum of the positives.
    """
    scores = np.array([p.score for p in pairs], dtype=np.float64)
    labels = np.array([p.label for p in pairs])
    if not np.all(np.isfinite(scores)):
        raise MetricError("scores must be finite")
    if not np.isin(labels, (0, 1)).all():
        raise MetricError("labels must be 0 or 1")
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs at least one positive and one negative pair")
    ranks = rankdata(scores, method="average")
    u = math.fsum(ranks[labels == 1]) - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


def _check_xy(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise MetricError("correlation needs at least 2 points")
    return x, y


def pearson(x, y) -> float:
    x, y = _check_xy(x, y)
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("undefined correlation: constant input")
    dx = x - math.fsum(x) / len(x)
    dy = y - math.fsum(y) / len(y)
    sxx = math.fsum(dx * dx)
    syy = math.fsum(dy * dy)
    r = math.fsum(dx * dy) / math.sqrt(sxx * syy)
    return min(1.0, max(-1.0, r))


def spearman(x, y) -> float:
    """Pearson correlation of average-tie ranks."""
    x, y = _check_xy(x, y)
    return pearson(rankdata(x, method="average"), rankdata(y, method="average"))


def max_human_similarity(machine, humans: Sequence) -> float:
    if len(humans) == 0:
        raise MetricError("need at least one human summary")
    return max(cosine(machine, h) for h in humans)
