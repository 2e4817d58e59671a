import itertools

import numpy as np
import pytest

from stylespace.catalog import Catalog, Item, ItemFeatures, Outfit, OutfitSet
from stylespace.splitter import (
    CoOccurrenceGraph,
    SplitError,
    assemble_split,
    assign_outfits,
    build_graph,
    load_split,
    louvain_partition,
    modularity,
    save_split,
)


def graph_from_edges(edges):
    adjacency = {}
    total = 0.0
    for a, b, *w in edges:
        weight = float(w[0]) if w else 1.0
        adjacency.setdefault(a, {})[b] = weight
        adjacency.setdefault(b, {})[a] = weight
        total += weight
    return CoOccurrenceGraph(nodes=tuple(sorted(adjacency)), adjacency=adjacency,
                             total_weight=total)


def make_catalog(ids, seasons=None):
    rng = np.random.default_rng(0)
    items, feats = {}, {}
    for n, i in enumerate(ids):
        items[i] = Item(id=i, product_type="Tops", category="tops", department="WW",
                        season=None if seasons is None else seasons[n % len(seasons)])
        feats[i] = ItemFeatures(
            text_embedding=rng.normal(size=1024),
            visual_embedding=rng.normal(size=512),
            category_embedding=rng.normal(size=50),
        )
    return Catalog(items=items, features=feats, department="WW")


class TestBuildGraph:
    def test_single_outfit_adds_all_pairs(self):
        outfits = OutfitSet((Outfit(hero_id="A", styling_ids=("B", "C")),))
        g = build_graph(outfits)
        assert g.adjacency["A"] == {"B": 1.0, "C": 1.0}
        assert g.adjacency["B"]["C"] == 1.0
        assert g.total_weight == 3.0

    def test_repeated_pair_accumulates_weight(self):
        outfits = OutfitSet((
            Outfit(hero_id="A", styling_ids=("B",)),
            Outfit(hero_id="B", styling_ids=("A",)),
        ))
        g = build_graph(outfits)
        assert g.adjacency["A"]["B"] == 2.0

    def test_non_cooccurring_items_have_no_edge(self):
        outfits = OutfitSet((
            Outfit(hero_id="A", styling_ids=("B",)),
            Outfit(hero_id="C", styling_ids=("D",)),
        ))
        g = build_graph(outfits)
        assert "C" not in g.adjacency["A"]
        assert "D" not in g.adjacency["A"]

    def test_no_self_loops_and_symmetric(self):
        rng = np.random.default_rng(2)
        ids = [f"I{i}" for i in range(20)]
        outfits = []
        for _ in range(50):
            chosen = rng.choice(20, size=3, replace=False)
            outfits.append(Outfit(hero_id=ids[chosen[0]],
                                  styling_ids=(ids[chosen[1]], ids[chosen[2]])))
        g = build_graph(OutfitSet(tuple(outfits)))
        for node, nbrs in g.adjacency.items():
            assert node not in nbrs
            for nbr, w in nbrs.items():
                assert g.adjacency[nbr][node] == w
                assert w >= 1


class TestModularity:
    def test_two_disjoint_edges_partitioned_by_edge(self):
        g = graph_from_edges([("a", "b"), ("c", "d")])
        assert modularity(g, {"a": 0, "b": 0, "c": 1, "d": 1}) == pytest.approx(0.5)

    def test_single_community_is_zero(self):
        g = graph_from_edges([("a", "b"), ("b", "c"), ("c", "a")])
        assert modularity(g, {"a": 0, "b": 0, "c": 0}) == pytest.approx(0.0)

    def test_all_singletons_negative(self):
        g = graph_from_edges([("a", "b"), ("b", "c"), ("c", "d")])
        q = modularity(g, {n: i for i, n in enumerate(g.nodes)})
        assert q < 0

    def test_joined_cliques_value(self):
        # two 4-cliques plus one bridge: m=13; each community has
        # S_in=12, S_tot=13 -> Q = 2*(12/26 - (13/26)^2) = 11/26
        edges = (list(itertools.combinations(["a1", "a2", "a3", "a4"], 2))
                 + list(itertools.combinations(["b1", "b2", "b3", "b4"], 2))
                 + [("a1", "b1")])
        g = graph_from_edges(edges)
        part = {n: 0 if n.startswith("a") else 1 for n in g.nodes}
        assert modularity(g, part) == pytest.approx(11 / 26, abs=1e-12)

    def test_matches_networkx_on_random_graphs(self):
        nx = pytest.importorskip("networkx")
        rng = np.random.default_rng(1)
        for trial in range(10):
            G = nx.gnm_random_graph(30, 80, seed=trial)
            edges = []
            for a, b in G.edges():
                w = int(rng.integers(1, 5))
                G[a][b]["weight"] = w
                edges.append((str(a), str(b), w))
            g = graph_from_edges(edges)
            labels = {n: int(rng.integers(4)) for n in g.nodes}
            groups = {}
            for n, c in labels.items():
                groups.setdefault(c, set()).add(int(n))
            expected = nx.algorithms.community.modularity(G, list(groups.values()))
            assert modularity(g, labels) == pytest.approx(expected, abs=1e-12)

    def test_missing_node_rejected(self):
        g = graph_from_edges([("a", "b")])
        with pytest.raises(ValueError, match="missing"):
            modularity(g, {"a": 0})


class TestLouvain:
    def test_two_disjoint_triangles(self):
        g = graph_from_edges([("a", "b"), ("b", "c"), ("c", "a"),
                              ("x", "y"), ("y", "z"), ("z", "x")])
        result = louvain_partition(g, seed=0)
        comms = result.communities
        assert comms["a"] == comms["b"] == comms["c"]
        assert comms["x"] == comms["y"] == comms["z"]
        assert comms["a"] != comms["x"]

    def test_beats_singleton_partition(self):
        g = graph_from_edges([("a", "b"), ("b", "c"), ("c", "a"), ("c", "d"),
                              ("d", "e"), ("e", "f"), ("f", "d")])
        result = louvain_partition(g, seed=3)
        singletons = {n: i for i, n in enumerate(g.nodes)}
        assert result.modularity >= modularity(g, singletons)

    def test_joined_cliques_recovered(self):
        edges = (list(itertools.combinations(["a1", "a2", "a3", "a4"], 2))
                 + list(itertools.combinations(["b1", "b2", "b3", "b4"], 2))
                 + [("a1", "b1")])
        g = graph_from_edges(edges)
        result = louvain_partition(g, seed=0)
        comms = result.communities
        assert len({comms[n] for n in ["a1", "a2", "a3", "a4"]}) == 1
        assert len({comms[n] for n in ["b1", "b2", "b3", "b4"]}) == 1
        assert comms["a1"] != comms["b1"]
        assert result.modularity == pytest.approx(11 / 26, abs=1e-12)

    def test_reported_modularity_matches_independent_recomputation(self):
        rng = np.random.default_rng(5)
        ids = [f"I{i}" for i in range(40)]
        outfits = []
        for _ in range(120):
            chosen = rng.choice(40, size=int(rng.integers(2, 6)), replace=False)
            outfits.append(Outfit(hero_id=ids[chosen[0]],
                                  styling_ids=tuple(ids[c] for c in chosen[1:])))
        g = build_graph(OutfitSet(tuple(outfits)))
        result = louvain_partition(g, seed=9)
        assert result.modularity == pytest.approx(
            modularity(g, result.communities), abs=1e-9
        )

    def test_modularity_non_decreasing_across_phases(self):
        rng = np.random.default_rng(6)
        ids = [f"I{i}" for i in range(60)]
        outfits = []
        for _ in range(150):
            chosen = rng.choice(60, size=3, replace=False)
            outfits.append(Outfit(hero_id=ids[chosen[0]],
                                  styling_ids=(ids[chosen[1]], ids[chosen[2]])))
        g = build_graph(OutfitSet(tuple(outfits)))
        result = louvain_partition(g, seed=2)
        for earlier, later in zip(result.phase_modularity, result.phase_modularity[1:]):
            assert later >= earlier - 1e-12

    def test_deterministic_under_seed(self):
        g = graph_from_edges([("a", "b"), ("b", "c"), ("c", "a"), ("c", "d"),
                              ("d", "e"), ("e", "f"), ("f", "d"), ("a", "f")])
        assert louvain_partition(g, seed=4) == louvain_partition(g, seed=4)


class TestAssembleSplit:
    def test_exact_ratio_when_attainable(self):
        catalog = make_catalog([f"I{i}" for i in range(100)])
        communities = {f"I{i}": (0 if i < 76 else 1) for i in range(100)}
        split = assemble_split(communities, catalog, target_ratio=0.76)
        assert split.achieved_ratio == pytest.approx(0.76)

    def test_ten_equal_communities_at_80(self):
        catalog = make_catalog([f"I{i}" for i in range(100)])
        communities = {f"I{i}": i // 10 for i in range(100)}
        split = assemble_split(communities, catalog, target_ratio=0.8)
        assert split.achieved_ratio == pytest.approx(0.8)
        train_comms = {c for i, c in communities.items() if split.side_of[i] == "train"}
        assert len(train_comms) == 8

    def test_greedy_matches_exhaustive_argmin(self):
        # sizes 50/30/20 at target 0.76: enumeration of all 2^3 assignments
        # puts {50, 30} in train (achieved 0.80, the closest attainable)
        catalog = make_catalog([f"I{i}" for i in range(100)])
        communities = {}
        idx = 0
        for comm, size in enumerate([50, 30, 20]):
            for _ in range(size):
                communities[f"I{idx}"] = comm
                idx += 1
        best = min(
            (abs(sum(s for c, s in enumerate([50, 30, 20]) if picks[c]) / 100 - 0.76),
             picks)
            for picks in itertools.product([True, False], repeat=3)
            if any(picks) and not all(picks)
        )
        assert best[0] == pytest.approx(abs(0.80 - 0.76))
        split = assemble_split(communities, catalog, target_ratio=0.76)
        assert split.achieved_ratio == pytest.approx(0.80)

    def test_single_community_rejected(self):
        catalog = make_catalog(["A", "B", "C"])
        with pytest.raises(SplitError, match="one community"):
            assemble_split({"A": 0, "B": 0, "C": 0}, catalog, target_ratio=0.76)

    def test_items_missing_from_communities_still_assigned(self):
        catalog = make_catalog(["A", "B", "C", "D"])
        split = assemble_split({"A": 0, "B": 1}, catalog, target_ratio=0.5)
        assert set(split.side_of) == {"A", "B", "C", "D"}

    def test_stratification_balances_attribute(self):
        # communities alternate seasons; stratified split keeps both sides mixed
        ids = [f"I{i}" for i in range(40)]
        catalog = make_catalog(ids, seasons=["SS", "AW"])
        communities = {i: n // 4 for n, i in enumerate(ids)}
        split = assemble_split(communities, catalog, target_ratio=0.5,
                               stratify_on="season")
        for side in ("train", "test"):
            seasons = {catalog.items[i].season for i in split.items_on(side)}
            assert seasons == {"SS", "AW"}


class TestAssignOutfits:
    def test_routing_and_conservation(self):
        catalog = make_catalog(["A", "B", "C", "D"])
        split = assemble_split({"A": 0, "B": 0, "C": 1, "D": 1}, catalog,
                               target_ratio=0.5)
        outfits = OutfitSet((
            Outfit(hero_id="A", styling_ids=("B",)),   # fully on A/B side
            Outfit(hero_id="C", styling_ids=("D",)),   # fully on C/D side
            Outfit(hero_id="A", styling_ids=("C",)),   # straddles -> dropped
        ))
        train_set, test_set, dropped = assign_outfits(outfits, split)
        assert len(train_set) + len(test_set) + dropped == len(outfits)
        assert dropped == 1
        train_items = {i for o in train_set for i in o.item_ids}
        test_items = {i for o in test_set for i in o.item_ids}
        assert not train_items & test_items

    def test_zero_leakage_on_random_data(self):
        rng = np.random.default_rng(8)
        ids = [f"I{i}" for i in range(60)]
        catalog = make_catalog(ids)
        outfits = []
        for _ in range(200):
            chosen = rng.choice(60, size=int(rng.integers(2, 6)), replace=False)
            outfits.append(Outfit(hero_id=ids[chosen[0]],
                                  styling_ids=tuple(ids[c] for c in chosen[1:])))
        outfit_set = OutfitSet(tuple(outfits))
        g = build_graph(outfit_set)
        result = louvain_partition(g, seed=0)
        split = assemble_split(result.communities, catalog, target_ratio=0.76)
        train_set, test_set, dropped = assign_outfits(outfit_set, split)
        train_items = {i for o in train_set for i in o.item_ids}
        test_items = {i for o in test_set for i in o.item_ids}
        assert not train_items & test_items
        assert len(train_set) + len(test_set) + dropped == len(outfit_set)


class TestSplitFile:
    def test_roundtrip(self, tmp_path):
        catalog = make_catalog(["A", "B", "C", "D"])
        split = assemble_split({"A": 0, "B": 0, "C": 1, "D": 1}, catalog,
                               target_ratio=0.5)
        path = tmp_path / "split.jsonl"
        save_split(split, path, modularity_value=0.31)
        loaded = load_split(path)
        assert loaded.side_of == split.side_of
        assert loaded.achieved_ratio == split.achieved_ratio
