"""Leak-free train/test partitioning via item co-occurrence communities.

Items that ever appear in an outfit together are connected in a weighted
graph; Louvain community detection groups them, and whole communities are
assigned to one side or the other, so no item can appear in both sets.
"""

from __future__ import annotations

import json
from collections import Counter, defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .catalog import Catalog, Outfit, OutfitSet


class SplitError(ValueError):
    """The requested partition cannot be produced."""


@dataclass(frozen=True)
class CoOccurrenceGraph:
    """Undirected weighted item graph; no self-loops, symmetric adjacency."""

    nodes: tuple[str, ...]
    adjacency: dict[str, dict[str, float]]
    total_weight: float  # m: sum over undirected edges

    def degree(self, node: str) -> float:
        return sum(self.adjacency[node].values())

    def edge_count(self) -> int:
        return sum(len(nbrs) for nbrs in self.adjacency.values()) // 2


@dataclass(frozen=True)
class LouvainResult:
    communities: dict[str, int]
    modularity: float
    phase_modularity: tuple[float, ...]


@dataclass(frozen=True)
class SplitAssignment:
    side_of: dict[str, str]  # item id -> "train" | "test"
    achieved_ratio: float
    dropped_outfits: int = 0

    def items_on(self, side: str) -> set[str]:
        return {i for i, s in self.side_of.items() if s == side}


def build_graph(outfits: OutfitSet | list[Outfit]) -> CoOccurrenceGraph:
    """Each outfit of size N adds +1 to all N(N-1)/2 item pairs."""
    weights: dict[tuple[str, str], float] = Counter()
    nodes: set[str] = set()
    for outfit in outfits:
        ids = outfit.item_ids
        nodes.update(ids)
        for i in range(len(ids)):
            for j in range(i + 1, len(ids)):
                a, b = sorted((ids[i], ids[j]))
                weights[(a, b)] += 1.0
    adjacency: dict[str, dict[str, float]] = {n: {} for n in nodes}
    for (a, b), w in weights.items():
        adjacency[a][b] = w
        adjacency[b][a] = w
    return CoOccurrenceGraph(
        nodes=tuple(sorted(nodes)),
        adjacency=adjacency,
        total_weight=float(sum(weights.values())),
    )


def modularity(graph: CoOccurrenceGraph, partition: dict[str, int]) -> float:
    """Newman weighted modularity Q = sum_c [S_in,c/2m - (S_tot,c/2m)^2].

    S_in,c counts intra-community weight in both directions; S_tot,c is the
    community's weighted degree sum.
    """
    missing = [n for n in graph.nodes if n not in partition]
    if missing:
        raise ValueError(f"partition is missing {len(missing)} node(s), e.g. {missing[0]!r}")
    two_m = 2.0 * graph.total_weight
    if two_m == 0:
        return 0.0
    s_in: Counter[int] = Counter()
    s_tot: Counter[int] = Counter()
    for node in graph.nodes:
        comm = partition[node]
        for nbr, w in graph.adjacency[node].items():
            s_tot[comm] += w
            if partition[nbr] == comm:
                s_in[comm] += w
    return float(sum(s_in[c] / two_m - (s_tot[c] / two_m) ** 2 for c in s_tot))


class _Aggregate:
    """Working graph for Louvain; unlike the public graph it allows
    self-loops, which appear when communities are collapsed to nodes."""

    def __init__(self, n: int):
        self.n = n
        self.adj: list[dict[int, float]] = [defaultdict(float) for _ in range(n)]
        self.self_loop = np.zeros(n)

    def add_edge(self, a: int, b: int, w: float) -> None:
        if a == b:
            self.self_loop[a] += w
        else:
            self.adj[a][b] += w
            self.adj[b][a] += w

    def degrees(self) -> np.ndarray:
        deg = np.array([sum(nbrs.values()) for nbrs in self.adj])
        return deg + 2.0 * self.self_loop


def _local_moves(
    agg: _Aggregate, m: float, rng: np.random.Generator
) -> tuple[np.ndarray, bool]:
    """One Louvain phase: greedy node moves until no positive modularity gain.

    Returns the node -> community array and whether any node moved. Ties on
    gain break toward the lowest community index.
    """
    comm = np.arange(agg.n)
    degree = agg.degrees()
    comm_tot = degree.copy()  # degree sum per community
    moved_any = False
    improved = True
    while improved:
        improved = False
        order = rng.permutation(agg.n)
        for node in order:
            k_i = degree[node]
            current = comm[node]
            # weights from node to each neighboring community
            links: dict[int, float] = defaultdict(float)
            for nbr, w in agg.adj[node].items():
                links[comm[nbr]] += w
            comm_tot[current] -= k_i
            # gain of joining community c from isolation: k_{i,c}/m - tot_c*k_i/(2m^2)
            best_comm = current
            best_gain = links.get(current, 0.0) / m - comm_tot[current] * k_i / (2.0 * m * m)
            for cand in sorted(links):
                if cand == current:
                    continue
                gain = links[cand] / m - comm_tot[cand] * k_i / (2.0 * m * m)
                if gain > best_gain + 1e-12 or (
                    abs(gain - best_gain) <= 1e-12 and cand < best_comm
                ):
                    best_gain = gain
                    best_comm = cand
            comm_tot[best_comm] += k_i
            if best_comm != current:
                comm[node] = best_comm
                improved = True
                moved_any = True
    return comm, moved_any


def _aggregate(agg: _Aggregate, comm: np.ndarray) -> tuple[_Aggregate, np.ndarray]:
    """Collapse communities into nodes; returns (new graph, relabelled comm)."""
    labels = np.unique(comm)
    relabel = {old: new for new, old in enumerate(labels)}
    mapped = np.array([relabel[c] for c in comm])
    out = _Aggregate(len(labels))
    for node in range(agg.n):
        a = mapped[node]
        out.self_loop[a] += agg.self_loop[node]
        for nbr, w in agg.adj[node].items():
            if node < nbr:
                b = mapped[nbr]
                out.add_edge(a, b, w)
    return out, mapped


def louvain_partition(graph: CoOccurrenceGraph, seed: int = 0) -> LouvainResult:
    """Two-phase Louvain: seeded local moves, then graph aggregation, until
    no move yields a modularity gain. Modularity never decreases per phase."""
    if not graph.nodes:
        raise ValueError("graph is empty")
    index_of = {n: i for i, n in enumerate(graph.nodes)}
    agg = _Aggregate(len(graph.nodes))
    seen: set[tuple[int, int]] = set()
    for node, nbrs in graph.adjacency.items():
        for nbr, w in nbrs.items():
            a, b = index_of[node], index_of[nbr]
            if (min(a, b), max(a, b)) not in seen:
                seen.add((min(a, b), max(a, b)))
                agg.add_edge(a, b, w)
    if graph.total_weight == 0:
        # no edges: every node is its own community
        communities = {n: i for i, n in enumerate(graph.nodes)}
        return LouvainResult(communities=communities, modularity=0.0, phase_modularity=(0.0,))

    rng = np.random.default_rng(seed)
    position = np.arange(len(graph.nodes))  # original node -> current aggregate node
    phase_q: list[float] = []
    while True:
        comm, moved = _local_moves(agg, graph.total_weight, rng)
        agg, mapped = _aggregate(agg, comm)
        position = mapped[position]
        partition = {n: int(position[i]) for i, n in enumerate(graph.nodes)}
        phase_q.append(modularity(graph, partition))
        if not moved:
            break
    # stable renumbering: communities ordered by their smallest member id
    reps: dict[int, str] = {}
    for node in graph.nodes:
        c = partition[node]
        if c not in reps or node < reps[c]:
            reps[c] = node
    order = {c: rank for rank, c in enumerate(sorted(reps, key=lambda c: reps[c]))}
    communities = {n: order[partition[n]] for n in graph.nodes}
    return LouvainResult(
        communities=communities,
        modularity=phase_q[-1],
        phase_modularity=tuple(phase_q),
    )


def assemble_split(
    communities: dict[str, int],
    catalog: Catalog,
    target_ratio: float = 0.76,
    stratify_on: str | None = None,
    stratify_weight: float = 0.1,
) -> SplitAssignment:
    """Greedily combine communities into train/test sides.

    Communities are placed largest first on the side whose fill is furthest
    below its target, minus a penalty for imbalance of the stratification
    attribute. Catalogue items absent from `communities` (never seen in an
    outfit) become singleton communities.
    """
    if not 0.0 < target_ratio < 1.0:
        raise SplitError(f"target_ratio must be in (0, 1), got {target_ratio}")
    groups: dict[int, list[str]] = defaultdict(list)
    for item_id, comm in communities.items():
        groups[comm].append(item_id)
    next_comm = max(groups) + 1 if groups else 0
    for item_id in catalog.ids():
        if item_id not in communities:
            groups[next_comm] = [item_id]
            next_comm += 1
    if len(groups) < 2:
        raise SplitError(
            "only one community: a leak-free split is impossible; reduce data coupling"
        )
    total = sum(len(members) for members in groups.values())
    targets = {"train": target_ratio * total, "test": (1.0 - target_ratio) * total}
    fill = {"train": 0.0, "test": 0.0}

    attr_of = None
    global_attr: Counter[str] = Counter()
    side_attr: dict[str, Counter[str]] = {"train": Counter(), "test": Counter()}
    if stratify_on is not None:
        attr_of = {
            i: str(getattr(catalog.items[i], stratify_on, None)) for i in catalog.ids()
        }
        global_attr = Counter(attr_of[i] for i in attr_of)

    def imbalance(side: str, members: list[str]) -> float:
        """L1 distance between the side's attribute mix (after adding the
        community) and the global mix, normalized to [0, 1]."""
        assert attr_of is not None
        merged = side_attr[side] + Counter(attr_of[m] for m in members)
        n = sum(merged.values())
        g = sum(global_attr.values())
        return 0.5 * sum(
            abs(merged.get(a, 0) / n - global_attr[a] / g) for a in global_attr
        )

    # largest first; ties by smallest member id for determinism
    ordered = sorted(groups.values(), key=lambda ms: (-len(ms), min(ms)))
    side_of: dict[str, str] = {}
    for members in ordered:
        scores = {}
        for side in ("train", "test"):
            deficit = (targets[side] - fill[side]) / total
            penalty = stratify_weight * imbalance(side, members) if attr_of else 0.0
            scores[side] = deficit - penalty
        side = "train" if scores["train"] >= scores["test"] else "test"
        for m in members:
            side_of[m] = side
        fill[side] += len(members)
        if attr_of:
            side_attr[side].update(attr_of[m] for m in members)
    if fill["train"] == 0 or fill["test"] == 0:
        raise SplitError("one side of the split is empty; adjust target ratio or data")
    return SplitAssignment(side_of=side_of, achieved_ratio=fill["train"] / total)


def assign_outfits(
    outfits: OutfitSet, split: SplitAssignment
) -> tuple[OutfitSet, OutfitSet, int]:
    """Route each outfit to the side holding ALL of its items; drop stragglers."""
    train: list[Outfit] = []
    test: list[Outfit] = []
    dropped = 0
    for outfit in outfits:
        sides = {split.side_of[i] for i in outfit.item_ids}
        if sides == {"train"}:
            train.append(outfit)
        elif sides == {"test"}:
            test.append(outfit)
        else:
            dropped += 1
    return OutfitSet(tuple(train)), OutfitSet(tuple(test)), dropped


def save_split(
    split: SplitAssignment, path: str | Path, modularity_value: float | None = None
) -> None:
    """Header line with the summary, then one (id, side) record per line."""
    header = {
        "achieved_ratio": split.achieved_ratio,
        "dropped_outfits": split.dropped_outfits,
        "modularity": modularity_value,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for item_id in sorted(split.side_of):
            fh.write(json.dumps({"id": item_id, "side": split.side_of[item_id]}) + "\n")


def load_split(path: str | Path) -> SplitAssignment:
    with open(path, "r", encoding="utf-8") as fh:
        header = json.loads(fh.readline())
        side_of = {}
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            side_of[rec["id"]] = rec["side"]
    return SplitAssignment(
        side_of=side_of,
        achieved_ratio=header["achieved_ratio"],
        dropped_outfits=header["dropped_outfits"],
    )
