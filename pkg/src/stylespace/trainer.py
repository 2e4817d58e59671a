"""Supervised training of the item embedder on positive/negative outfits.

Each epoch pairs every positive outfit with one freshly sampled negative,
embeds all items of a batch in a single forward pass (hero flags set per
role), scores outfits by mean pairwise dot product, and minimizes binary
cross-entropy with Adam.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace

import numpy as np

from .analysis import roc_auc
from .catalog import Catalog, Outfit, OutfitSet
from .embedder import (
    EmbedderArch,
    EmbedderParams,
    FeatureBatch,
    backward_gradients,
    embed_batch,
    init_params,
)
from .sampler import StylingDistribution, negatives_for
from .scorer import sigmoid

FEATURE_NAMES = ("text", "vis", "cat", "hero")

ABLATION_FEATURE_SETS = (
    ("vis",),
    ("text",),
    ("text", "vis"),
    ("text", "vis", "cat"),
    ("text", "vis", "cat", "hero"),
)


@dataclass(frozen=True)
class TrainingConfig:
    feature_set: frozenset[str] = frozenset(FEATURE_NAMES)
    epochs: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    dropout: float = 0.5
    seed: int = 0
    negative_ratio: int = 1
    fresh_negatives: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "feature_set", frozenset(self.feature_set))
        unknown = self.feature_set - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"unknown feature names {sorted(unknown)}")
        if not self.feature_set & {"text", "vis", "cat"}:
            raise ValueError("feature_set must include at least one of text/vis/cat")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.negative_ratio != 1:
            raise ValueError("negative_ratio is fixed at 1 (one negative per positive)")


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    mean_loss: float
    n_examples: int
    wall_time: float
    val_auc: float | None = None


@dataclass(frozen=True)
class TrainHistory:
    epochs: tuple[EpochStats, ...] = ()


def bce_loss(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Binary cross-entropy from logits, in the fused numerically stable form.

    Returns (per-example loss, d loss / d logit). Stable for all finite
    logits: loss = max(x, 0) - x*y + log(1 + exp(-|x|)).
    """
    x = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    loss = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    grad = sigmoid(x) - y
    return loss, grad


class Adam:
    """Adam with bias correction; updates parameter arrays in place."""

    def __init__(self, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999,
                 eps: float = 1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for key, p in params.items():
            g = grads[key]
            m = self.m.setdefault(key, np.zeros_like(p))
            v = self.v.setdefault(key, np.zeros_like(p))
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass
class _FeatureTable:
    """Catalogue features as dense matrices with excluded modalities zeroed."""

    row_of: dict[str, int]
    text: np.ndarray
    vis: np.ndarray
    cat: np.ndarray
    hero_enabled: bool


def build_feature_table(
    catalog: Catalog, feature_set: frozenset[str] | set[str]
) -> _FeatureTable:
    ids = catalog.ids()
    row_of = {i: r for r, i in enumerate(ids)}
    text = np.stack([catalog.features[i].text_embedding for i in ids])
    vis = np.stack([catalog.features[i].visual_embedding for i in ids])
    cat = np.stack([catalog.features[i].category_embedding for i in ids])
    if "text" not in feature_set:
        text = np.zeros_like(text)
    if "vis" not in feature_set:
        vis = np.zeros_like(vis)
    if "cat" not in feature_set:
        cat = np.zeros_like(cat)
    return _FeatureTable(
        row_of=row_of, text=text, vis=vis, cat=cat, hero_enabled="hero" in feature_set
    )


def _batch_rows(
    outfits: list[Outfit], table: _FeatureTable
) -> tuple[FeatureBatch, np.ndarray, list[tuple[int, int]]]:
    """Stack all items of all outfits into one feature batch.

    Returns (features, hero flags, per-outfit row ranges)."""
    rows: list[int] = []
    flags: list[int] = []
    spans: list[tuple[int, int]] = []
    for outfit in outfits:
        start = len(rows)
        for pos, item_id in enumerate(outfit.item_ids):
            rows.append(table.row_of[item_id])
            flags.append(1 if (pos == 0 and table.hero_enabled) else 0)
        spans.append((start, len(rows)))
    idx = np.array(rows)
    features = FeatureBatch(text=table.text[idx], vis=table.vis[idx], cat=table.cat[idx])
    return features, np.array(flags, dtype=np.float64), spans


def _outfit_logits(
    emb: np.ndarray, spans: list[tuple[int, int]]
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Per-outfit mean-pairwise-dot logits plus d(logit)/d(embedding rows)."""
    logits = np.empty(len(spans))
    grads: list[np.ndarray] = []
    for k, (r0, r1) in enumerate(spans):
        z = emb[r0:r1]
        n = r1 - r0
        gram = z @ z.T
        norm = n * (n - 1)
        logits[k] = (gram.sum() - np.trace(gram)) / 2.0 / norm
        total = z.sum(axis=0)
        grads.append((total - z) / norm)
    return logits, grads


def train(
    config: TrainingConfig,
    catalog: Catalog,
    positives: OutfitSet,
    dist: StylingDistribution,
    arch: EmbedderArch | None = None,
    val_positives: OutfitSet | None = None,
    val_dist: StylingDistribution | None = None,
) -> tuple[EmbedderParams, TrainHistory]:
    """Train the embedder; deterministic under config.seed.

    When validation outfits and their styling distribution are given, the
    test AUC (with fresh seeded negatives) is recorded per epoch.
    """
    if len(positives) == 0:
        raise ValueError("no positive outfits to train on")
    arch = arch if arch is not None else EmbedderArch()
    arch = replace(arch, dropout=config.dropout)
    params = init_params(arch, seed=config.seed)
    optimizer = Adam(config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    table = build_feature_table(catalog, config.feature_set)
    rng = np.random.default_rng(config.seed)

    fixed_negatives: list[Outfit] | None = None
    if not config.fresh_negatives:
        fixed_negatives = negatives_for(positives, dist, catalog,
                                        int(rng.integers(2**63)))

    pos_list = list(positives)
    history: list[EpochStats] = []
    for epoch in range(config.epochs):
        started = time.perf_counter()
        order = rng.permutation(len(pos_list))
        if fixed_negatives is None:
            negatives = negatives_for([pos_list[i] for i in order], dist, catalog,
                                      int(rng.integers(2**63)))
        else:
            negatives = [fixed_negatives[i] for i in order]
        loss_sum = 0.0
        n_examples = 0
        for b0 in range(0, len(order), config.batch_size):
            batch_pos = [pos_list[i] for i in order[b0 : b0 + config.batch_size]]
            batch_neg = negatives[b0 : b0 + config.batch_size]
            outfits = batch_pos + batch_neg
            labels = np.array([1.0] * len(batch_pos) + [0.0] * len(batch_neg))
            features, flags, spans = _batch_rows(outfits, table)
            emb, trace = embed_batch(params, features, flags, mode="train",
                                     seed=int(rng.integers(2**63)))
            logits, logit_grads = _outfit_logits(emb, spans)
            losses, dlogit = bce_loss(logits, labels)
            loss_sum += float(losses.sum())
            n_examples += len(outfits)
            demb = np.zeros_like(emb)
            scale = 1.0 / len(outfits)  # mean loss over the batch
            for k, (r0, r1) in enumerate(spans):
                demb[r0:r1] = dlogit[k] * scale * logit_grads[k]
            grads = backward_gradients(params, trace, demb)
            optimizer.step(params.trainable(), grads.flat())
        val_auc = None
        if val_positives is not None and val_dist is not None:
            val_auc = evaluate_auc(params, catalog, val_positives, val_dist,
                                   seed=config.seed + epoch + 1,
                                   feature_set=config.feature_set)
        history.append(EpochStats(
            epoch=epoch,
            mean_loss=loss_sum / n_examples if n_examples else 0.0,
            n_examples=n_examples,
            wall_time=time.perf_counter() - started,
            val_auc=val_auc,
        ))
    return params, TrainHistory(epochs=tuple(history))


def score_outfits(
    params: EmbedderParams,
    catalog: Catalog,
    outfits: list[Outfit] | OutfitSet,
    feature_set: frozenset[str] | set[str] = frozenset(FEATURE_NAMES),
    chunk_rows: int = 8192,
) -> np.ndarray:
    """Infer-mode compatibility scores for a collection of outfits."""
    table = build_feature_table(catalog, feature_set)
    outfit_list = list(outfits)
    scores = np.empty(len(outfit_list))
    start = 0
    while start < len(outfit_list):
        # grow the chunk outfit by outfit without splitting any outfit across chunks
        end, rows = start, 0
        while end < len(outfit_list) and rows + outfit_list[end].size <= chunk_rows:
            rows += outfit_list[end].size
            end += 1
        end = max(end, start + 1)
        chunk = outfit_list[start:end]
        features, flags, spans = _batch_rows(chunk, table)
        emb, _ = embed_batch(params, features, flags, mode="infer")
        logits, _ = _outfit_logits(emb, spans)
        scores[start:end] = sigmoid(logits)
        start = end
    return scores


def evaluate_auc(
    params: EmbedderParams,
    catalog: Catalog,
    positives: OutfitSet,
    dist: StylingDistribution,
    seed: int = 0,
    feature_set: frozenset[str] | set[str] = frozenset(FEATURE_NAMES),
) -> float:
    """AUC of positives vs freshly sampled frequency-matched negatives."""
    negatives = negatives_for(positives, dist, catalog, seed)
    outfits = list(positives) + negatives
    labels = np.array([1] * len(positives) + [0] * len(negatives))
    scores = score_outfits(params, catalog, outfits, feature_set)
    return roc_auc(scores, labels)


@dataclass(frozen=True)
class AblationRow:
    features: tuple[str, ...]
    mean_auc: float
    aucs: tuple[float, ...]


@dataclass(frozen=True)
class AblationResult:
    rows: tuple[AblationRow, ...] = ()

    def mean_auc(self, features: tuple[str, ...]) -> float:
        for row in self.rows:
            if row.features == features:
                return row.mean_auc
        raise KeyError(features)

    def as_table(self) -> str:
        lines = ["features\tmean_auc\truns"]
        for row in self.rows:
            runs = ",".join(f"{a:.4f}" for a in row.aucs)
            lines.append(f"{' + '.join(row.features)}\t{row.mean_auc:.4f}\t{runs}")
        return "\n".join(lines)


def ablation_study(
    base_config: TrainingConfig,
    catalog: Catalog,
    train_positives: OutfitSet,
    test_positives: OutfitSet,
    repeats: int = 1,
    arch: EmbedderArch | None = None,
) -> AblationResult:
    """Train each standard feature subset `repeats` times; report mean test AUC.

    Training negatives come from the train-side styling distribution and test
    negatives from the test side, so the disjoint split stays leak-free.
    """
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    from .sampler import build_styling_distribution

    train_dist = build_styling_distribution(train_positives, catalog)
    test_dist = build_styling_distribution(test_positives, catalog)
    rows: list[AblationRow] = []
    for set_index, features in enumerate(ABLATION_FEATURE_SETS):
        aucs: list[float] = []
        for r in range(repeats):
            config = replace(base_config, feature_set=frozenset(features),
                             seed=base_config.seed + 1000 * r + set_index)
            params, _ = train(config, catalog, train_positives, train_dist, arch=arch)
            aucs.append(evaluate_auc(params, catalog, test_positives, test_dist,
                                     seed=config.seed + 1, feature_set=config.feature_set))
        rows.append(AblationRow(features=features, mean_auc=float(np.mean(aucs)),
                                aucs=tuple(aucs)))
    return AblationResult(rows=tuple(rows))
