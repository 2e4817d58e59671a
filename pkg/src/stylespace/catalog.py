"""Core domain types and line-delimited catalogue/outfit ingestion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

TEXT_DIM = 1024
VISUAL_DIM = 512
CATEGORY_DIM = 50

DEPARTMENTS = ("WW", "MW")
OUTFIT_MIN_SIZE = 2
OUTFIT_MAX_SIZE = 5

LABELS = ("positive", "negative")
SOURCES = ("dataset", "generated", "negative-sampled")


class CatalogError(ValueError):
    """Malformed catalogue or outfit data."""


@dataclass(frozen=True)
class Item:
    """A single fashion product. `category` is finer-grained than `product_type`."""

    id: str
    product_type: str
    category: str
    department: str
    season: str | None = None
    title: str | None = None
    description: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CatalogError("item id must be non-empty")
        if not self.product_type:
            raise CatalogError(f"item {self.id!r}: product_type must be non-empty")
        if not self.category:
            raise CatalogError(f"item {self.id!r}: category must be non-empty")
        if self.department not in DEPARTMENTS:
            raise CatalogError(
                f"item {self.id!r}: department must be one of {DEPARTMENTS}, got {self.department!r}"
            )


@dataclass(frozen=True)
class ItemFeatures:
    """Precomputed per-item feature vectors (text 1024-d, visual 512-d, category 50-d)."""

    text_embedding: np.ndarray
    visual_embedding: np.ndarray
    category_embedding: np.ndarray

    def __post_init__(self) -> None:
        for name, vec, dim in (
            ("text_embedding", self.text_embedding, TEXT_DIM),
            ("visual_embedding", self.visual_embedding, VISUAL_DIM),
            ("category_embedding", self.category_embedding, CATEGORY_DIM),
        ):
            arr = np.asarray(vec, dtype=np.float64)
            if arr.shape != (dim,):
                raise CatalogError(f"{name} must have length {dim}, got shape {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise CatalogError(f"{name} contains non-finite entries")
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class Outfit:
    """One hero item plus 1-4 styling items referencing catalogue ids.

    Construction does not enforce the structural invariants; use
    `validate_outfit` so that all violations of a bad record can be reported
    together.
    """

    hero_id: str
    styling_ids: tuple[str, ...]
    label: str = "positive"
    source: str = "dataset"

    def __post_init__(self) -> None:
        object.__setattr__(self, "styling_ids", tuple(self.styling_ids))

    @property
    def size(self) -> int:
        return 1 + len(self.styling_ids)

    @property
    def item_ids(self) -> tuple[str, ...]:
        """Hero first, styling items in stored order."""
        return (self.hero_id, *self.styling_ids)


@dataclass(frozen=True)
class OutfitTemplate:
    """Hero product type plus the styling product types to fill."""

    hero_type: str
    styling_types: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "styling_types", tuple(self.styling_types))
        n = 1 + len(self.styling_types)
        if not OUTFIT_MIN_SIZE <= n <= OUTFIT_MAX_SIZE:
            raise CatalogError(
                f"template size must be in [{OUTFIT_MIN_SIZE}, {OUTFIT_MAX_SIZE}], got {n}"
            )

    @property
    def size(self) -> int:
        return 1 + len(self.styling_types)


@dataclass(frozen=True)
class Catalog:
    """Immutable single-department item catalogue with complete features."""

    items: dict[str, Item]
    features: dict[str, ItemFeatures]
    department: str

    def __len__(self) -> int:
        return len(self.items)

    def __contains__(self, item_id: str) -> bool:
        return item_id in self.items

    def ids(self) -> list[str]:
        return sorted(self.items)

    def items_of_type(self, product_type: str) -> list[Item]:
        return sorted(
            (it for it in self.items.values() if it.product_type == product_type),
            key=lambda it: it.id,
        )

    def product_types(self) -> list[str]:
        return sorted({it.product_type for it in self.items.values()})


@dataclass(frozen=True)
class OutfitSet:
    """An ordered collection of outfits, all referencing one catalogue."""

    outfits: tuple[Outfit, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "outfits", tuple(self.outfits))

    def __len__(self) -> int:
        return len(self.outfits)

    def __iter__(self) -> Iterator[Outfit]:
        return iter(self.outfits)

    def __getitem__(self, idx: int) -> Outfit:
        return self.outfits[idx]

    def positives(self) -> OutfitSet:
        return OutfitSet(tuple(o for o in self.outfits if o.label == "positive"))

    def referenced_ids(self) -> set[str]:
        ids: set[str] = set()
        for o in self.outfits:
            ids.update(o.item_ids)
        return ids


def validate_outfit(outfit: Outfit, catalog: Catalog | None = None) -> list[str]:
    """Collect every violated outfit invariant; empty list means valid."""
    violations: list[str] = []
    n = outfit.size
    if not OUTFIT_MIN_SIZE <= n <= OUTFIT_MAX_SIZE:
        violations.append(f"outfit size {n} outside [{OUTFIT_MIN_SIZE}, {OUTFIT_MAX_SIZE}]")
    if outfit.hero_id in outfit.styling_ids:
        violations.append("hero appears as styling item")
    seen: set[str] = set()
    for sid in outfit.styling_ids:
        if sid in seen:
            violations.append(f"duplicate styling id {sid!r}")
        seen.add(sid)
    if outfit.label not in LABELS:
        violations.append(f"label {outfit.label!r} not one of {LABELS}")
    if outfit.source not in SOURCES:
        violations.append(f"source {outfit.source!r} not one of {SOURCES}")
    if catalog is not None:
        for iid in (outfit.hero_id, *outfit.styling_ids):
            if iid not in catalog:
                violations.append(f"unknown item id {iid!r}")
    return violations


def _parse_jsonl(path: str | Path) -> Iterator[tuple[int, dict]]:
    """Yield (line number, record) pairs, skipping blank lines."""
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CatalogError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if not isinstance(record, dict):
                raise CatalogError(f"{path}:{lineno}: record must be an object")
            yield lineno, record


def load_catalog(path: str | Path) -> Catalog:
    """Load a catalogue from line-delimited JSON, one item per line.

    Every record must carry id, product_type, category, department and the
    three feature vectors. Errors report the offending line number. The file
    must hold a single department.
    """
    items: dict[str, Item] = {}
    features: dict[str, ItemFeatures] = {}
    department: str | None = None
    for lineno, rec in _parse_jsonl(path):
        try:
            item = Item(
                id=str(rec["id"]),
                product_type=rec["product_type"],
                category=rec["category"],
                department=rec["department"],
                season=rec.get("season"),
                title=rec.get("title"),
                description=rec.get("description"),
            )
            feats = ItemFeatures(
                text_embedding=np.asarray(rec["text_embedding"], dtype=np.float64),
                visual_embedding=np.asarray(rec["visual_embedding"], dtype=np.float64),
                category_embedding=np.asarray(rec["category_embedding"], dtype=np.float64),
            )
        except KeyError as exc:
            raise CatalogError(f"{path}:{lineno}: missing field {exc}") from exc
        except CatalogError as exc:
            raise CatalogError(f"{path}:{lineno}: {exc}") from exc
        if item.id in items:
            raise CatalogError(f"{path}:{lineno}: duplicate id {item.id!r}")
        if department is None:
            department = item.department
        elif item.department != department:
            raise CatalogError(
                f"{path}:{lineno}: mixed departments ({item.department!r} after {department!r});"
                " a catalogue holds one department"
            )
        items[item.id] = item
        features[item.id] = feats
    if department is None:
        raise CatalogError(f"{path}: empty catalogue")
    return Catalog(items=items, features=features, department=department)


def save_catalog(catalog: Catalog, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item_id in sorted(catalog.items):
            item = catalog.items[item_id]
            feats = catalog.features[item_id]
            rec = {
                "id": item.id,
                "product_type": item.product_type,
                "category": item.category,
                "department": item.department,
                "season": item.season,
                "title": item.title,
                "description": item.description,
                "text_embedding": feats.text_embedding.tolist(),
                "visual_embedding": feats.visual_embedding.tolist(),
                "category_embedding": feats.category_embedding.tolist(),
            }
            fh.write(json.dumps(rec) + "\n")


def load_outfits(path: str | Path, catalog: Catalog) -> OutfitSet:
    """Load outfits from line-delimited JSON; labels default to positive.

    Raises on any invariant violation or dangling item reference,
    reporting the line number and every violation found on that line.
    """
    outfits: list[Outfit] = []
    for lineno, rec in _parse_jsonl(path):
        try:
            outfit = Outfit(
                hero_id=str(rec["hero_id"]),
                styling_ids=tuple(str(s) for s in rec["styling_ids"]),
                label=rec.get("label", "positive"),
                source=rec.get("source", "dataset"),
            )
        except KeyError as exc:
            raise CatalogError(f"{path}:{lineno}: missing field {exc}") from exc
        violations = validate_outfit(outfit, catalog)
        if violations:
            raise CatalogError(f"{path}:{lineno}: " + "; ".join(violations))
        outfits.append(outfit)
    return OutfitSet(tuple(outfits))


def save_outfits(outfits: Iterable[Outfit], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for o in outfits:
            rec = {
                "hero_id": o.hero_id,
                "styling_ids": list(o.styling_ids),
                "label": o.label,
                "source": o.source,
            }
            fh.write(json.dumps(rec) + "\n")
