"""Outfit compatibility scoring from item embeddings.

The compatibility logit of an outfit of N items is the sum of all pairwise
embedding dot products divided by N(N-1); the score is the sigmoid of the
logit. The pairwise dot products are summed in ascending value order so the
result is bit-for-bit independent of how the items were ordered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .catalog import Outfit


@dataclass(frozen=True)
class ScoredOutfit:
    outfit: Outfit
    logit: float
    score: float


def sigmoid(x: float | np.ndarray) -> float | np.ndarray:
    """Numerically stable logistic function."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return float(out) if out.ndim == 0 else out


def pairwise_dots(embeddings: np.ndarray) -> list[tuple[int, int, float]]:
    """All (i, j, z_i . z_j) for i < j, in ascending index order."""
    emb = np.asarray(embeddings, dtype=np.float64)
    n = emb.shape[0]
    gram = emb @ emb.T
    return [(i, j, float(gram[i, j])) for i in range(n) for j in range(i + 1, n)]


def outfit_logit(embeddings: np.ndarray) -> float:
    """Mean pairwise compatibility: sum of dot products over i<j, divided by N(N-1).

    The denominator is deliberately twice the number of pairs.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2:
        raise ValueError(f"embeddings must be a 2-d array, got shape {emb.shape}")
    n = emb.shape[0]
    if n < 2:
        raise ValueError(f"an outfit needs at least 2 items, got {n}")
    dots = np.array([d for _, _, d in pairwise_dots(emb)])
    dots.sort()  # canonical summation order: permutation of items cannot change the sum
    return float(dots.sum() / (n * (n - 1)))


def outfit_score(embeddings: np.ndarray) -> float:
    return float(sigmoid(outfit_logit(embeddings)))


def score_outfit(outfit: Outfit, embeddings: np.ndarray) -> ScoredOutfit:
    """Bundle an outfit with its logit and sigmoid score."""
    logit = outfit_logit(embeddings)
    return ScoredOutfit(outfit=outfit, logit=logit, score=float(sigmoid(logit)))
