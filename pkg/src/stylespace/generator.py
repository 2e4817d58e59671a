"""Outfit completion from a hero item via template-constrained beam search.

A template fixes the styling product types to fill. The beam search runs
once per permutation of the styling types (order changes which partial
outfits survive pruning), and the best complete outfit across all
permutations wins. An exhaustive oracle over every combination is provided
for desk-scale verification.
"""

from __future__ import annotations

import itertools
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, Item, Outfit, OutfitSet, OutfitTemplate
from .embedder import EmbedderParams, embed_infer, stack_features
from .scorer import ScoredOutfit, outfit_logit, sigmoid

EmbeddingCache = dict[tuple[str, int], np.ndarray]


class GenerationError(ValueError):
    """The generation request cannot be satisfied."""


@dataclass(frozen=True)
class BeamState:
    """A partial outfit: chosen item ids, their embedding sum, and the
    unnormalized pairwise-dot total so candidates can be scored in O(d)."""

    item_ids: tuple[str, ...]
    embedding_sum: np.ndarray
    pair_dot_sum: float

    def extend(self, item_id: str, emb: np.ndarray) -> "BeamState":
        return BeamState(
            item_ids=(*self.item_ids, item_id),
            embedding_sum=self.embedding_sum + emb,
            pair_dot_sum=self.pair_dot_sum + float(self.embedding_sum @ emb),
        )

    def logit(self, normalize: bool = True) -> float:
        n = len(self.item_ids)
        if n < 2:
            return 0.0
        return self.pair_dot_sum / (n * (n - 1)) if normalize else self.pair_dot_sum


def build_embedding_cache(
    params: EmbedderParams,
    catalog: Catalog,
    hero_id: str,
    candidate_ids: list[str],
) -> EmbeddingCache:
    """Infer-mode embeddings: hero with flag 1, all candidates with flag 0."""
    ids = [hero_id] + [c for c in candidate_ids if c != hero_id]
    feats = stack_features([catalog.features[i] for i in ids])
    flags = np.array([1] + [0] * (len(ids) - 1))
    emb = embed_infer(params, feats, flags)
    cache: EmbeddingCache = {(ids[0], 1): emb[0]}
    for i, item_id in enumerate(ids[1:], start=1):
        cache[(item_id, 0)] = emb[i]
    return cache


def _pool_by_type(
    pool: Catalog | list[Item], template: OutfitTemplate, hero_id: str
) -> dict[str, list[str]]:
    items = pool.items.values() if isinstance(pool, Catalog) else pool
    by_type: dict[str, list[str]] = {t: [] for t in set(template.styling_types)}
    for item in items:
        if item.id != hero_id and item.product_type in by_type:
            by_type[item.product_type].append(item.id)
    for t, ids in by_type.items():
        if not ids:
            raise GenerationError(f"pool has no items of required type {t!r}")
        ids.sort()
    return by_type


def _check_hero(catalog: Catalog, hero_id: str, template: OutfitTemplate) -> None:
    if hero_id not in catalog:
        raise GenerationError(f"unknown hero item {hero_id!r}")
    hero_type = catalog.items[hero_id].product_type
    if hero_type != template.hero_type:
        raise GenerationError(
            f"hero {hero_id!r} has type {hero_type!r}, template expects {template.hero_type!r}"
        )


def _final_scored(
    hero_id: str, styling_ids: tuple[str, ...], cache: EmbeddingCache
) -> ScoredOutfit:
    """Canonical rescoring of a complete outfit from cached embeddings."""
    outfit = Outfit(hero_id=hero_id, styling_ids=styling_ids,
                    label="positive", source="generated")
    emb = np.stack([cache[(hero_id, 1)]] + [cache[(s, 0)] for s in styling_ids])
    logit = outfit_logit(emb)
    return ScoredOutfit(outfit=outfit, logit=logit, score=float(sigmoid(logit)))


def _distinct_orderings(styling_types: tuple[str, ...]) -> list[tuple[str, ...]]:
    return sorted(set(itertools.permutations(styling_types)))


def _in_template_order(
    styling_ids: tuple[str, ...], template: OutfitTemplate, pool: Catalog
) -> tuple[str, ...]:
    """Arrange chosen styling items so their types match the template order."""
    by_type: dict[str, list[str]] = {}
    for item_id in sorted(styling_ids):
        by_type.setdefault(pool.items[item_id].product_type, []).append(item_id)
    ordered = []
    for t in template.styling_types:
        ordered.append(by_type[t].pop(0))
    return tuple(ordered)


def complete_outfit_beam(
    hero_id: str,
    template: OutfitTemplate,
    pool: Catalog,
    params: EmbedderParams | None,
    beam_width: int = 3,
    embeddings: EmbeddingCache | None = None,
    normalize_partial: bool = True,
) -> ScoredOutfit:
    """Fill the template's styling slots to maximize the outfit score.

    For each ordering of the styling types, every beam state is extended
    with every pool item of the next type and the top `beam_width` partial
    outfits by logit survive (ties break on ascending item-id tuple). The
    best complete outfit across orderings is returned, rescored canonically.
    """
    if beam_width < 1:
        raise GenerationError("beam_width must be >= 1")
    _check_hero(pool, hero_id, template)
    by_type = _pool_by_type(pool, template, hero_id)
    if embeddings is None:
        if params is None:
            raise GenerationError("need params or a precomputed embedding cache")
        candidates = sorted({i for ids in by_type.values() for i in ids})
        embeddings = build_embedding_cache(params, pool, hero_id, candidates)

    hero_emb = embeddings[(hero_id, 1)]
    start = BeamState(item_ids=(hero_id,), embedding_sum=hero_emb.copy(), pair_dot_sum=0.0)
    best: tuple[float, tuple[str, ...]] | None = None  # (logit, sorted styling ids)
    for ordering in _distinct_orderings(template.styling_types):
        beam = [start]
        for styling_type in ordering:
            expanded: list[tuple[float, tuple[str, ...], BeamState]] = []
            for state in beam:
                for cand in by_type[styling_type]:
                    if cand in state.item_ids:
                        continue
                    nxt = state.extend(cand, embeddings[(cand, 0)])
                    expanded.append((nxt.logit(normalize_partial), nxt.item_ids, nxt))
            if not expanded:
                raise GenerationError(
                    f"no remaining candidates of type {styling_type!r} for some beam state"
                )
            expanded.sort(key=lambda t: (-t[0], t[1]))
            beam = [t[2] for t in expanded[:beam_width]]
        for state in beam:
            # canonical rescoring so the cross-ordering max uses the same
            # metric as the exhaustive oracle
            emb = np.stack([embeddings[(i, 1 if i == hero_id else 0)]
                            for i in state.item_ids])
            key = (outfit_logit(emb), tuple(sorted(state.item_ids[1:])))
            if best is None or key[0] > best[0] or (key[0] == best[0] and key[1] < best[1]):
                best = key
    assert best is not None
    styling = _in_template_order(best[1], template, pool)
    return _final_scored(hero_id, styling, embeddings)


def exhaustive_complete(
    hero_id: str,
    template: OutfitTemplate,
    pool: Catalog,
    params: EmbedderParams | None,
    embeddings: EmbeddingCache | None = None,
    max_combinations: int = 10**6,
) -> ScoredOutfit:
    """True argmax of the outfit score over every combination (desk scale)."""
    _check_hero(pool, hero_id, template)
    by_type = _pool_by_type(pool, template, hero_id)
    n_combos = 1
    for t in template.styling_types:
        n_combos *= len(by_type[t])
    if n_combos > max_combinations:
        raise GenerationError(
            f"{n_combos} combinations exceed the cap of {max_combinations}"
        )
    if embeddings is None:
        if params is None:
            raise GenerationError("need params or a precomputed embedding cache")
        candidates = sorted({i for ids in by_type.values() for i in ids})
        embeddings = build_embedding_cache(params, pool, hero_id, candidates)

    best: tuple[float, tuple[str, ...], tuple[str, ...]] | None = None
    pools = [by_type[t] for t in template.styling_types]
    for combo in itertools.product(*pools):
        if len(set(combo)) != len(combo):
            continue
        emb = np.stack([embeddings[(hero_id, 1)]] + [embeddings[(c, 0)] for c in combo])
        logit = outfit_logit(emb)
        key = tuple(sorted(combo))
        if best is None or logit > best[0] or (logit == best[0] and key < best[1]):
            best = (logit, key, combo)
    if best is None:
        raise GenerationError("no duplicate-free combination exists for this template")
    return _final_scored(hero_id, best[2], embeddings)


@dataclass(frozen=True)
class TemplateStats:
    """Occurrence counts of (hero type, styling-type multiset) templates."""

    counts: dict[str, dict[tuple[str, ...], int]]

    def most_frequent(self, hero_type: str) -> OutfitTemplate:
        by_styling = self.counts.get(hero_type)
        if not by_styling:
            raise KeyError(f"no templates recorded for hero type {hero_type!r}")
        styling = min(by_styling, key=lambda s: (-by_styling[s], s))
        return OutfitTemplate(hero_type=hero_type, styling_types=styling)

    def top_templates(self, n: int) -> list[tuple[OutfitTemplate, int]]:
        """The n most frequent templates overall, ties broken lexicographically."""
        flat = [
            (count, hero, styling)
            for hero, by_styling in self.counts.items()
            for styling, count in by_styling.items()
        ]
        flat.sort(key=lambda t: (-t[0], t[1], t[2]))
        return [
            (OutfitTemplate(hero_type=hero, styling_types=styling), count)
            for count, hero, styling in flat[:n]
        ]


def template_frequencies(outfits: OutfitSet, catalog: Catalog) -> TemplateStats:
    """Count templates over positive outfits; styling types are canonically sorted."""
    counts: dict[str, Counter[tuple[str, ...]]] = {}
    for outfit in outfits:
        if outfit.label != "positive":
            continue
        hero_type = catalog.items[outfit.hero_id].product_type
        styling = tuple(sorted(catalog.items[s].product_type for s in outfit.styling_ids))
        counts.setdefault(hero_type, Counter())[styling] += 1
    return TemplateStats(counts={h: dict(c) for h, c in counts.items()})
