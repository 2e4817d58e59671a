"""Synthetic catalogue/outfit generation with planted style structure.

Every item carries a latent style vector drawn from one of C cluster
centers plus Gaussian noise; its text/visual/category feature vectors are
fixed random linear projections of that latent vector with per-modality
noise (text cleanest, visual noisiest). Positive outfits draw all their
members from a single cluster, so compatibility is learnable from the
features alone. Also loads GloVe-style word-vector files for product
categories.
"""

from __future__ import annotations

import json
import warnings
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .catalog import (
    CATEGORY_DIM,
    TEXT_DIM,
    VISUAL_DIM,
    Catalog,
    Item,
    ItemFeatures,
    Outfit,
    OutfitSet,
)


class SynthError(ValueError):
    """Invalid synthetic-data configuration."""


DEFAULT_PRODUCT_TYPES: tuple[tuple[str, tuple[str, ...]], ...] = (
    ("Dresses", ("day dresses", "party dresses", "maxi dresses")),
    ("Tops", ("blouses", "shirts", "vests")),
    ("Jeans", ("skinny jeans", "straight jeans")),
    ("Skirts", ("mini skirts", "midi skirts")),
    ("Shoes", ("heels", "trainers", "boots")),
    ("Bags", ("clutch bags", "shoulder bags")),
)

# outfit-size mix follows the observed heavy skew toward small outfits
DEFAULT_SIZE_MIX = {2: 0.493, 3: 0.348, 4: 0.134, 5: 0.025}


def default_outfit_counts(total: int) -> dict[int, int]:
    counts = {size: int(round(total * frac)) for size, frac in DEFAULT_SIZE_MIX.items()}
    counts[2] += total - sum(counts.values())
    return counts


@dataclass(frozen=True)
class SynthConfig:
    n_items_per_type: int = 60
    product_types: tuple[tuple[str, tuple[str, ...]], ...] = DEFAULT_PRODUCT_TYPES
    n_style_clusters: int = 6
    latent_dim: int = 8
    noise_scale: float = 0.1
    outfit_counts_by_size: dict[int, int] = field(
        default_factory=lambda: default_outfit_counts(1000)
    )
    seed: int = 0
    department: str = "WW"
    # relative feature-noise per modality (times noise_scale); text is cleanest
    text_noise: float = 0.3
    vis_noise: float = 5.0
    cat_noise: float = 0.6
    # popularity skew of styling-item selection within a (type, cluster) cell
    styling_skew: float = 0.8
    templates: tuple[tuple[str, ...], ...] | None = None
    seasons: tuple[str, ...] = ("SS", "AW")

    def __post_init__(self) -> None:
        if self.n_style_clusters < 2:
            raise SynthError("n_style_clusters must be >= 2")
        if self.latent_dim < 2:
            raise SynthError("latent_dim must be >= 2")
        if self.noise_scale < 0:
            raise SynthError("noise_scale must be >= 0")
        if self.n_items_per_type < 1:
            raise SynthError("n_items_per_type must be >= 1")
        if not self.product_types:
            raise SynthError("need at least one product type")
        for size, count in self.outfit_counts_by_size.items():
            if size not in (2, 3, 4, 5):
                raise SynthError(f"outfit size {size} outside [2, 5]")
            if count < 0:
                raise SynthError("outfit counts must be >= 0")
        type_names = {name for name, _ in self.product_types}
        if self.templates:
            for template in self.templates:
                if not 2 <= len(template) <= 5:
                    raise SynthError(f"template size {len(template)} outside [2, 5]")
                for t in template:
                    if t not in type_names:
                        raise SynthError(f"template requests unknown product type {t!r}")

    @classmethod
    def from_file(cls, path: str | Path) -> "SynthConfig":
        """Read a config from a JSON object file (whole-file or single line)."""
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        if "product_types" in data:
            data["product_types"] = tuple(
                (name, tuple(cats)) for name, cats in data["product_types"]
            )
        if "outfit_counts_by_size" in data:
            data["outfit_counts_by_size"] = {
                int(k): int(v) for k, v in data["outfit_counts_by_size"].items()
            }
        if data.get("templates"):
            data["templates"] = tuple(tuple(t) for t in data["templates"])
        return cls(**data)


def _type_slug(name: str) -> str:
    return name.lower().replace(" ", "-")


def generate_synthetic_dataset(
    config: SynthConfig,
) -> tuple[Catalog, OutfitSet, dict[str, int]]:
    """Build (catalogue, positive outfits, item id -> cluster index).

    Deterministic under config.seed: identical configs give bitwise-identical
    datasets.
    """
    rng = np.random.default_rng(config.seed)
    k = config.latent_dim
    n_clusters = config.n_style_clusters

    # unit-norm cluster centers: within-cluster dots concentrate near 1,
    # cross-cluster dots near 0
    centers = rng.normal(size=(n_clusters, k))
    centers /= np.linalg.norm(centers, axis=1, keepdims=True)

    projections = {
        "text": rng.normal(0.0, 1.0 / np.sqrt(k), size=(k, TEXT_DIM)),
        "vis": rng.normal(0.0, 1.0 / np.sqrt(k), size=(k, VISUAL_DIM)),
        "cat": rng.normal(0.0, 1.0 / np.sqrt(k), size=(k, CATEGORY_DIM)),
    }

    items: dict[str, Item] = {}
    features: dict[str, ItemFeatures] = {}
    clusters: dict[str, int] = {}
    cells: dict[tuple[str, int], list[str]] = defaultdict(list)
    for type_name, categories in config.product_types:
        slug = _type_slug(type_name)
        for i in range(config.n_items_per_type):
            item_id = f"{slug}-{i:04d}"
            cluster = i % n_clusters  # round-robin keeps every cell populated
            latent = centers[cluster] + config.noise_scale * rng.normal(size=k)
            text = latent @ projections["text"] + (
                config.text_noise * config.noise_scale * rng.normal(size=TEXT_DIM)
            )
            vis = latent @ projections["vis"] + (
                config.vis_noise * config.noise_scale * rng.normal(size=VISUAL_DIM)
            )
            cat = latent @ projections["cat"] + (
                config.cat_noise * config.noise_scale * rng.normal(size=CATEGORY_DIM)
            )
            category = categories[int(rng.integers(len(categories)))]
            season = config.seasons[int(rng.integers(len(config.seasons)))]
            items[item_id] = Item(
                id=item_id,
                product_type=type_name,
                category=category,
                department=config.department,
                season=season,
                title=f"{category} {i}",
            )
            features[item_id] = ItemFeatures(
                text_embedding=text, visual_embedding=vis, category_embedding=cat
            )
            clusters[item_id] = cluster
            cells[(type_name, cluster)].append(item_id)

    type_names = [name for name, _ in config.product_types]

    def cell_weights(cell: list[str]) -> np.ndarray:
        ranks = np.arange(1, len(cell) + 1, dtype=np.float64)
        w = ranks ** (-config.styling_skew)
        return w / w.sum()

    weights = {key: cell_weights(cell) for key, cell in cells.items()}

    def pick_template(size: int) -> tuple[str, list[str]]:
        if config.templates:
            options = [t for t in config.templates if len(t) == size]
            if not options:
                raise SynthError(f"no template of size {size} configured")
            template = options[int(rng.integers(len(options)))]
            return template[0], list(template[1:])
        hero_type = type_names[int(rng.integers(len(type_names)))]
        others = [t for t in type_names if t != hero_type]
        need = size - 1
        if len(others) >= need:
            idx = rng.choice(len(others), size=need, replace=False)
            styling = [others[int(i)] for i in idx]
        else:  # few types configured: allow repeats
            styling = [others[int(i)] for i in rng.integers(len(others), size=need)] \
                if others else [hero_type] * need
        return hero_type, styling

    outfits: list[Outfit] = []
    for size in sorted(config.outfit_counts_by_size):
        for _ in range(config.outfit_counts_by_size[size]):
            cluster = int(rng.integers(n_clusters))
            hero_type, styling_types = pick_template(size)
            hero_cell = cells[(hero_type, cluster)]
            hero_id = hero_cell[int(rng.integers(len(hero_cell)))]
            taken = {hero_id}
            styling_ids: list[str] = []
            for styling_type in styling_types:
                cell = cells[(styling_type, cluster)]
                w = weights[(styling_type, cluster)]
                choice = None
                for _ in range(20):
                    candidate = cell[int(rng.choice(len(cell), p=w))]
                    if candidate not in taken:
                        choice = candidate
                        break
                if choice is None:
                    free = [c for c in cell if c not in taken]
                    if not free:
                        raise SynthError(
                            f"cannot fill a size-{size} outfit: cell "
                            f"({styling_type!r}, cluster {cluster}) has too few items"
                        )
                    choice = free[0]
                styling_ids.append(choice)
                taken.add(choice)
            outfits.append(Outfit(hero_id=hero_id, styling_ids=tuple(styling_ids),
                                  label="positive", source="dataset"))

    catalog = Catalog(items=items, features=features, department=config.department)
    return catalog, OutfitSet(tuple(outfits)), clusters


def save_ground_truth(clusters: dict[str, int], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for item_id in sorted(clusters):
            fh.write(json.dumps({"id": item_id, "cluster": clusters[item_id]}) + "\n")


def load_ground_truth(path: str | Path) -> dict[str, int]:
    clusters: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                rec = json.loads(line)
                clusters[rec["id"]] = int(rec["cluster"])
    return clusters


class WordVectorError(ValueError):
    """Malformed word-vector file or unresolvable category."""


@dataclass(frozen=True)
class WordVectors:
    """Token -> vector table; categories resolve by averaging their tokens."""

    table: dict[str, np.ndarray]
    dim: int

    def __contains__(self, token: str) -> bool:
        return token in self.table

    def resolve(self, category: str) -> np.ndarray:
        """Element-wise mean of the category's known token vectors."""
        tokens = category.lower().split()
        known = [self.table[t] for t in tokens if t in self.table]
        if not known:
            raise WordVectorError(f"category {category!r} has no resolvable token")
        return np.mean(known, axis=0)

    def resolve_or_zero(self, category: str) -> np.ndarray:
        """Like resolve, but unknown categories fall back to the zero vector."""
        try:
            return self.resolve(category)
        except WordVectorError:
            warnings.warn(f"category {category!r} has no word vector; using zeros")
            return np.zeros(self.dim)


def load_word_vectors(path: str | Path, dim: int = CATEGORY_DIM) -> WordVectors:
    """Parse a plain-text word-vector file: token then `dim` decimals per line."""
    table: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").split()
            if not parts:
                continue
            token, values = parts[0], parts[1:]
            if len(values) != dim:
                raise WordVectorError(
                    f"{path}:{lineno}: token {token!r} has {len(values)} values, expected {dim}"
                )
            try:
                table[token.lower()] = np.array([float(v) for v in values])
            except ValueError as exc:
                raise WordVectorError(f"{path}:{lineno}: token {token!r}: {exc}") from exc
    return WordVectors(table=table, dim=dim)
