"""Offline metrics, AB-test significance analysis, and style-space queries.

The AB analysis treats each binary rating as mean + user effect + outfit
effect + residual and estimates the variance components by method of
moments, so the standard error of a group mean accounts for both ways the
observations are correlated.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

from .catalog import Catalog
from .embedder import EmbedderParams, embed_infer, stack_features


@dataclass(frozen=True)
class RatingRecord:
    user_id: str
    outfit_id: str
    group: str  # "control" | "test"
    rating: int  # 0 | 1
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        if self.group not in ("control", "test"):
            raise ValueError(f"group must be 'control' or 'test', got {self.group!r}")
        if self.rating not in (0, 1):
            raise ValueError(f"rating must be 0 or 1, got {self.rating!r}")


@dataclass(frozen=True)
class GroupStats:
    mean: float
    var_user: float
    var_outfit: float
    var_residual: float
    se_mean: float
    n_users: int
    n_outfits: int
    n_observations: int


@dataclass(frozen=True)
class ABTestResult:
    control: GroupStats
    test: GroupStats
    relative_difference_pct: float
    t_statistic: float | None
    p_value: float | None
    no_variance: bool
    per_template: dict[str, "ABTestResult"] = field(default_factory=dict)


def roc_auc(scores: list[float] | np.ndarray, labels: list[int] | np.ndarray) -> float:
    """Probability that a random positive outranks a random negative, ties 1/2.

    Rank-based computation, O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be equal-length 1-d sequences")
    n_pos = int(np.sum(labels == 1))
    n_neg = int(np.sum(labels == 0))
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need at least one positive and one negative label")
    # average ranks (1-based), with tied scores sharing the mean of their ranks
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    pos_rank_sum = float(ranks[labels == 1].sum())
    u = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


def _group_stats(records: list[RatingRecord]) -> GroupStats:
    users = sorted({r.user_id for r in records})
    outfits = sorted({r.outfit_id for r in records})
    n_users, n_outfits = len(users), len(outfits)
    if n_users < 2 or n_outfits < 2:
        raise ValueError(
            f"group needs >= 2 users and >= 2 outfits, got {n_users} users / {n_outfits} outfits"
        )
    seen: set[tuple[str, str]] = set()
    for r in records:
        key = (r.user_id, r.outfit_id)
        if key in seen:
            raise ValueError(f"duplicate rating for user/outfit pair {key}")
        seen.add(key)
    uidx = {u: i for i, u in enumerate(users)}
    oidx = {o: i for i, o in enumerate(outfits)}
    y = np.full((n_users, n_outfits), np.nan)
    for r in records:
        y[uidx[r.user_id], oidx[r.outfit_id]] = float(r.rating)
    observed = ~np.isnan(y)
    n = int(observed.sum())
    grand = float(np.nansum(y) / n)

    user_counts = observed.sum(axis=1).astype(np.float64)
    outfit_counts = observed.sum(axis=0).astype(np.float64)
    user_means = np.nansum(y, axis=1) / user_counts
    outfit_means = np.nansum(y, axis=0) / outfit_counts

    # mean squares for rows, columns, and the interaction residual
    ss_user = float(np.sum(user_counts * (user_means - grand) ** 2))
    ss_outfit = float(np.sum(outfit_counts * (outfit_means - grand) ** 2))
    resid = y - user_means[:, None] - outfit_means[None, :] + grand
    ss_resid = float(np.nansum(resid**2))
    df_user = n_users - 1
    df_outfit = n_outfits - 1
    df_resid = n - n_users - n_outfits + 1
    ms_user = ss_user / df_user
    ms_outfit = ss_outfit / df_outfit
    ms_resid = ss_resid / df_resid if df_resid > 0 else 0.0

    # effective per-level counts (reduce to O and U on a complete table)
    c_user = (n - float(np.sum(user_counts**2)) / n) / df_user
    c_outfit = (n - float(np.sum(outfit_counts**2)) / n) / df_outfit
    var_residual = max(ms_resid, 0.0)
    var_user = max((ms_user - var_residual) / c_user, 0.0)
    var_outfit = max((ms_outfit - var_residual) / c_outfit, 0.0)

    # Var(grand mean) with unequal counts: each user's effect enters n_u times
    se2 = (
        var_user * float(np.sum(user_counts**2)) / n**2
        + var_outfit * float(np.sum(outfit_counts**2)) / n**2
        + var_residual / n
    )
    return GroupStats(
        mean=grand,
        var_user=var_user,
        var_outfit=var_outfit,
        var_residual=var_residual,
        se_mean=math.sqrt(max(se2, 0.0)),
        n_users=n_users,
        n_outfits=n_outfits,
        n_observations=n,
    )


def ab_test_analysis(
    ratings: list[RatingRecord],
    templates_of: dict[str, str] | None = None,
) -> ABTestResult:
    """Two-way random-effects comparison of the test and control groups.

    `templates_of` optionally maps outfit id -> template label; when given,
    a per-template breakdown is included for templates where both groups
    still have at least 2 users and 2 outfits.
    """
    groups: dict[str, list[RatingRecord]] = {"control": [], "test": []}
    for r in sorted(ratings, key=lambda r: (r.group, r.user_id, r.outfit_id)):
        groups[r.group].append(r)
    if not groups["control"] or not groups["test"]:
        raise ValueError("both control and test groups need ratings")
    control = _group_stats(groups["control"])
    test = _group_stats(groups["test"])
    if control.mean == 0.0:
        raise ValueError("control mean is zero; relative difference undefined")
    rel = (test.mean - control.mean) / control.mean * 100.0
    se_diff = math.sqrt(control.se_mean**2 + test.se_mean**2)
    if se_diff == 0.0:
        t_stat, p_value, no_variance = None, None, True
    else:
        t_stat = (test.mean - control.mean) / se_diff
        # normal approximation; accurate at the observation counts involved
        p_value = math.erfc(abs(t_stat) / math.sqrt(2.0))
        no_variance = False

    per_template: dict[str, ABTestResult] = {}
    if templates_of:
        by_template: dict[str, list[RatingRecord]] = defaultdict(list)
        for r in ratings:
            tpl = templates_of.get(r.outfit_id)
            if tpl is not None:
                by_template[tpl].append(r)
        for tpl in sorted(by_template):
            try:
                per_template[tpl] = ab_test_analysis(by_template[tpl])
            except ValueError:
                continue  # too few users/outfits in this slice
    return ABTestResult(
        control=control,
        test=test,
        relative_difference_pct=rel,
        t_statistic=t_stat,
        p_value=p_value,
        no_variance=no_variance,
        per_template=per_template,
    )


def format_ab_report(result: ABTestResult) -> str:
    """Plain-text report: control score, test score, relative difference, p-value."""
    rows = [("all", result)]
    rows += [(name, r) for name, r in result.per_template.items()]
    lines = [
        f"{'segment':<40} {'ctrl':>6} {'test':>6} {'rel diff %':>10} {'p-value':>10}",
    ]
    for name, r in rows:
        p = "n/a" if r.p_value is None else f"{r.p_value:.4g}"
        lines.append(
            f"{name:<40} {r.control.mean:>6.2f} {r.test.mean:>6.2f}"
            f" {r.relative_difference_pct:>10.2f} {p:>10}"
        )
    if result.no_variance:
        lines.append("note: no variance observed; t statistic undefined")
    return "\n".join(lines)


def project_2d(
    embeddings: np.ndarray, method: str = "pca", seed: int = 0, perplexity: float = 30.0
) -> np.ndarray:
    """Project row vectors to 2-d, by PCA or exact (non-accelerated) t-SNE."""
    emb = np.asarray(embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] < 2:
        raise ValueError("need at least 2 embedding vectors")
    if method == "pca":
        centered = emb - emb.mean(axis=0)
        # right singular vectors of the centered data = principal axes
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
        axes = vt[:2]
        # deterministic sign: largest-magnitude loading of each axis is positive
        for k in range(axes.shape[0]):
            pivot = np.argmax(np.abs(axes[k]))
            if axes[k, pivot] < 0:
                axes[k] = -axes[k]
        return centered @ axes.T
    if method == "tsne":
        if emb.shape[0] > 5000:
            raise ValueError("exact t-SNE is limited to 5000 points")
        if emb.shape[0] <= 3:
            raise ValueError("t-SNE needs more than 3 points")
        from sklearn.manifold import TSNE

        eff_perplexity = min(perplexity, (emb.shape[0] - 1) / 3.0)
        tsne = TSNE(
            n_components=2,
            method="exact",
            perplexity=eff_perplexity,
            init="random",
            random_state=seed,
            max_iter=1000,
        )
        return np.asarray(tsne.fit_transform(emb), dtype=np.float64)
    raise ValueError(f"method must be 'pca' or 'tsne', got {method!r}")


def nearest_in_style(
    query_id: str,
    catalog: Catalog,
    params: EmbedderParams,
    k: int = 10,
    query_as_hero: bool = True,
    candidates_as_hero: bool = False,
    type_filter: str | None = None,
    embeddings: dict[tuple[str, int], np.ndarray] | None = None,
) -> list[tuple[str, float]]:
    """Top-k candidates by style-space dot product with the query item.

    The query is excluded. Results are sorted by descending score, then id.
    A precomputed (item id, hero flag) -> embedding cache may be supplied.
    """
    if query_id not in catalog:
        raise KeyError(f"unknown item id {query_id!r}")
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    candidate_ids = [
        i
        for i in catalog.ids()
        if i != query_id
        and (type_filter is None or catalog.items[i].product_type == type_filter)
    ]
    if not candidate_ids:
        return []
    q_flag = int(query_as_hero)
    c_flag = int(candidates_as_hero)
    if embeddings is None:
        feats = stack_features([catalog.features[i] for i in [query_id] + candidate_ids])
        flags = np.array([q_flag] + [c_flag] * len(candidate_ids))
        emb = embed_infer(params, feats, flags)
        query_vec, cand_mat = emb[0], emb[1:]
    else:
        query_vec = embeddings[(query_id, q_flag)]
        cand_mat = np.stack([embeddings[(i, c_flag)] for i in candidate_ids])
    scores = cand_mat @ query_vec
    ranked = sorted(zip(candidate_ids, scores), key=lambda t: (-t[1], t[0]))
    return [(i, float(s)) for i, s in ranked[:k]]
