"""Negative-outfit generation by type-preserving, frequency-matched replacement.

Negatives keep the hero item and replace every styling item with another
item of the same product type, drawn from the empirical distribution of
styling occurrences in the positive outfits. Matching that distribution
keeps item frequencies identical between positives and negatives, so a
model cannot separate them by memorizing popular items.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .catalog import Catalog, Outfit, OutfitSet

MAX_REDRAWS = 10


@dataclass(frozen=True)
class TypeDistribution:
    """Empirical styling-occurrence distribution for one product type."""

    item_ids: tuple[str, ...]
    probabilities: np.ndarray
    cumulative: np.ndarray

    def sample(self, rng: np.random.Generator) -> str:
        idx = int(np.searchsorted(self.cumulative, rng.random(), side="right"))
        return self.item_ids[min(idx, len(self.item_ids) - 1)]


@dataclass(frozen=True)
class StylingDistribution:
    by_type: dict[str, TypeDistribution]

    def types(self) -> list[str]:
        return sorted(self.by_type)

    def probability(self, product_type: str, item_id: str) -> float:
        dist = self.by_type[product_type]
        try:
            return float(dist.probabilities[dist.item_ids.index(item_id)])
        except ValueError:
            return 0.0


@dataclass(frozen=True)
class NegativeSample:
    """A sampled negative outfit plus the slots (if any) that could not avoid
    duplicating an existing item after the redraw budget."""

    outfit: Outfit
    degenerate_slots: tuple[int, ...] = ()


def _as_rng(seed: int | np.random.Generator) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def build_styling_distribution(outfits: OutfitSet, catalog: Catalog) -> StylingDistribution:
    """Per-type empirical probabilities of items over styling occurrences.

    Hero occurrences do not contribute. Items never used as styling items
    are absent from the distribution.
    """
    if len(outfits) == 0:
        raise ValueError("cannot build a styling distribution from an empty outfit set")
    counts: dict[str, Counter[str]] = {}
    for outfit in outfits:
        if outfit.label != "positive":
            raise ValueError("styling distribution must be built from positive outfits only")
        for sid in outfit.styling_ids:
            ptype = catalog.items[sid].product_type
            counts.setdefault(ptype, Counter())[sid] += 1
    by_type: dict[str, TypeDistribution] = {}
    for ptype, counter in counts.items():
        ids = tuple(sorted(counter))
        freqs = np.array([counter[i] for i in ids], dtype=np.float64)
        probs = freqs / freqs.sum()
        by_type[ptype] = TypeDistribution(
            item_ids=ids, probabilities=probs, cumulative=np.cumsum(probs)
        )
    return StylingDistribution(by_type=by_type)


def negative_sample(
    outfit: Outfit,
    dist: StylingDistribution,
    catalog: Catalog,
    seed: int | np.random.Generator,
) -> NegativeSample:
    """Replace each styling item with a same-type draw from the distribution.

    A draw equal to the slot's original item, or colliding with any item
    already in the outfit, is redrawn up to MAX_REDRAWS times; a slot that
    still collides afterwards keeps the duplicate and is flagged degenerate.
    """
    rng = _as_rng(seed)
    taken = {outfit.hero_id}
    new_styling: list[str] = []
    degenerate: list[int] = []
    for slot, original in enumerate(outfit.styling_ids):
        ptype = catalog.items[original].product_type
        if ptype not in dist.by_type:
            raise KeyError(f"styling distribution has no entries for type {ptype!r}")
        type_dist = dist.by_type[ptype]
        choice = original
        for _ in range(MAX_REDRAWS):
            candidate = type_dist.sample(rng)
            if candidate != original and candidate not in taken:
                choice = candidate
                break
        else:
            degenerate.append(slot)
        new_styling.append(choice)
        taken.add(choice)
    negative = Outfit(
        hero_id=outfit.hero_id,
        styling_ids=tuple(new_styling),
        label="negative",
        source="negative-sampled",
    )
    return NegativeSample(outfit=negative, degenerate_slots=tuple(degenerate))


def negatives_for(
    outfits: OutfitSet | list[Outfit],
    dist: StylingDistribution,
    catalog: Catalog,
    seed: int | np.random.Generator,
) -> list[Outfit]:
    """One negative per positive, in input order, from a single seeded stream."""
    rng = _as_rng(seed)
    return [negative_sample(o, dist, catalog, rng).outfit for o in outfits]
