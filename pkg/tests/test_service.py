import json

import numpy as np
import pytest

pytest.importorskip("httpx")
from fastapi.testclient import TestClient

from stylespace.analysis import ab_test_analysis, nearest_in_style
from stylespace.embedder import EmbedderArch, init_params
from stylespace.generator import complete_outfit_beam, template_frequencies
from stylespace.scorer import outfit_logit, sigmoid
from stylespace.service import (
    EvalOutfit,
    RatingStore,
    build_state,
    create_app,
    load_eval_outfits,
    save_eval_outfits,
    user_outfit_order,
)

from helpers import small_synth

ARCH = EmbedderArch(d_text=16, d_vis=16, d_cat=8, d_hidden=16, d_out=16)


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("service")
    catalog, outfits, clusters = small_synth(
        n_items_per_type=10, n_clusters=2, noise=0.1,
        counts={2: 20, 3: 10}, seed=4, n_types=3,
    )
    params = init_params(ARCH, seed=1)
    eval_outfits = []
    for pair in range(4):
        for group in ("test", "control"):
            outfit = outfits[pair * 2 + (group == "control")]
            eval_outfits.append(EvalOutfit(
                outfit_id=f"{group}-{pair:04d}", group=group,
                hero_id=outfit.hero_id, styling_ids=outfit.styling_ids,
                template="Tops | Jeans",
            ))
    eval_path = tmp / "eval.jsonl"
    save_eval_outfits(eval_outfits, eval_path)
    state = build_state(
        catalog, params,
        outfits_for_templates=outfits,
        eval_outfits_path=eval_path,
        ratings_log_path=tmp / "ratings.jsonl",
        session_seed=3,
        clusters=clusters,
    )
    state.min_results_observations = 4
    return {
        "catalog": catalog, "outfits": outfits, "params": params,
        "state": state, "client": TestClient(create_app(state)), "tmp": tmp,
    }


class TestItems:
    def test_list_items(self, world):
        resp = world["client"].get("/items")
        assert resp.status_code == 200
        body = resp.json()
        assert len(body["items"]) == len(world["catalog"])
        assert body["department"] == "WW"
        assert all("cluster" in item for item in body["items"])

    def test_neighbors_match_library(self, world):
        catalog, params, state = world["catalog"], world["params"], world["state"]
        for query in catalog.ids()[:5]:
            resp = world["client"].get(f"/items/{query}/neighbors", params={"k": 4})
            assert resp.status_code == 200
            got = [(n["id"], n["score"]) for n in resp.json()["neighbors"]]
            expected = nearest_in_style(query, catalog, params, k=4,
                                        embeddings=state.embeddings)
            assert got == [(i, s) for i, s in expected]

    def test_neighbors_type_filter(self, world):
        query = world["catalog"].ids()[0]
        resp = world["client"].get(f"/items/{query}/neighbors",
                                   params={"type": "Shoes", "k": 3})
        for n in resp.json()["neighbors"]:
            assert n["product_type"] == "Shoes"

    def test_unknown_item_404(self, world):
        assert world["client"].get("/items/nope/neighbors").status_code == 404


class TestScore:
    def test_matches_library_scorer(self, world):
        state = world["state"]
        outfit = world["outfits"][0]
        resp = world["client"].post("/outfits/score", json={
            "hero_id": outfit.hero_id, "styling_ids": list(outfit.styling_ids),
        })
        assert resp.status_code == 200
        body = resp.json()
        emb = np.stack([state.embeddings[(outfit.hero_id, 1)]]
                       + [state.embeddings[(s, 0)] for s in outfit.styling_ids])
        logit = outfit_logit(emb)
        assert body["logit"] == logit
        assert body["score"] == float(sigmoid(logit))
        n = outfit.size
        assert len(body["pairs"]) == n * (n - 1) // 2

    def test_identical_payload_identical_response(self, world):
        outfit = world["outfits"][1]
        payload = {"hero_id": outfit.hero_id, "styling_ids": list(outfit.styling_ids)}
        a = world["client"].post("/outfits/score", json=payload)
        b = world["client"].post("/outfits/score", json=payload)
        assert a.content == b.content

    def test_unknown_id_404_names_offender(self, world):
        outfit = world["outfits"][0]
        resp = world["client"].post("/outfits/score", json={
            "hero_id": outfit.hero_id, "styling_ids": ["QQ"],
        })
        assert resp.status_code == 404
        assert "QQ" in resp.json()["detail"]

    def test_malformed_payload_400(self, world):
        resp = world["client"].post("/outfits/score", json={"hero_id": 3})
        assert resp.status_code == 400

    def test_duplicate_items_422(self, world):
        outfit = world["outfits"][0]
        resp = world["client"].post("/outfits/score", json={
            "hero_id": outfit.hero_id,
            "styling_ids": [outfit.styling_ids[0], outfit.styling_ids[0]],
        })
        assert resp.status_code == 422


class TestComplete:
    def test_default_template_is_most_frequent(self, world):
        catalog, outfits = world["catalog"], world["outfits"]
        hero = outfits[0].hero_id
        resp = world["client"].post("/outfits/complete", json={"hero_id": hero})
        assert resp.status_code == 200
        body = resp.json()
        stats = template_frequencies(outfits, catalog)
        expected = stats.most_frequent(catalog.items[hero].product_type)
        assert tuple(body["template"]["styling_types"]) == expected.styling_types

    def test_matches_library_generation(self, world):
        catalog, outfits, params, state = (world["catalog"], world["outfits"],
                                           world["params"], world["state"])
        hero = outfits[0].hero_id
        resp = world["client"].post("/outfits/complete",
                                    json={"hero_id": hero, "beam_width": 3})
        body = resp.json()
        stats = template_frequencies(outfits, catalog)
        template = stats.most_frequent(catalog.items[hero].product_type)
        expected = complete_outfit_beam(hero, template, catalog, params,
                                        beam_width=3, embeddings=state.embeddings)
        assert tuple(body["styling_ids"]) == expected.outfit.styling_ids
        assert body["logit"] == expected.logit
        assert body["score"] == expected.score

    def test_wider_beam_never_worse(self, world):
        hero = world["outfits"][0].hero_id
        narrow = world["client"].post("/outfits/complete",
                                      json={"hero_id": hero, "beam_width": 1}).json()
        wide = world["client"].post("/outfits/complete",
                                    json={"hero_id": hero, "beam_width": 3}).json()
        assert wide["logit"] >= narrow["logit"] - 1e-15

    def test_unknown_hero_404(self, world):
        assert world["client"].post("/outfits/complete",
                                    json={"hero_id": "zz"}).status_code == 404


class TestProjection:
    def test_pca_projection(self, world):
        resp = world["client"].get("/projection", params={"method": "pca"})
        assert resp.status_code == 200
        points = resp.json()["points"]
        assert len(points) == len(world["catalog"])
        assert all("x" in p and "y" in p and "product_type" in p for p in points)

    def test_bad_method_422(self, world):
        resp = world["client"].get("/projection", params={"method": "umap"})
        assert resp.status_code == 422


class TestEvaluationFlow:
    def test_per_user_orders_are_deterministic_and_differ(self, world):
        state = world["state"]
        order_a = user_outfit_order(state, "alice")
        order_b = user_outfit_order(state, "bob")
        assert order_a == user_outfit_order(state, "alice")
        assert order_a != order_b
        assert sorted(order_a) == sorted(order_b) == sorted(state.eval_outfits)

    def test_next_hides_group_and_marks_progress(self, world):
        client = world["client"]
        resp = client.get("/evaluation/next", params={"user": "carol"})
        assert resp.status_code == 200
        body = resp.json()
        assert not body["done"]
        assert body["progress"] == {"rated": 0, "total": 8}
        assert "group" not in json.dumps(body)
        # blind cards also omit any hero marking
        assert "hero" not in {k for item in body["outfit"]["items"] for k in item}

    def test_rating_flow_and_overwrite(self, world):
        client, state = world["client"], world["state"]
        first = client.get("/evaluation/next", params={"user": "dave"}).json()
        outfit_id = first["outfit"]["outfit_id"]
        before = len(state.ratings.records)
        resp = client.post("/ratings", json={
            "user_id": "dave", "outfit_id": outfit_id, "rating": 1,
        })
        assert resp.status_code == 200
        assert resp.json() == {"count": before + 1, "overwrote": False}
        # server-side group is attached from the stored assignment
        assert state.ratings.records[("dave", outfit_id)].group == \
            state.eval_outfits[outfit_id].group
        again = client.post("/ratings", json={
            "user_id": "dave", "outfit_id": outfit_id, "rating": 0,
        })
        assert again.json() == {"count": before + 1, "overwrote": True}
        assert state.ratings.records[("dave", outfit_id)].rating == 0
        nxt = client.get("/evaluation/next", params={"user": "dave"}).json()
        assert nxt["outfit"]["outfit_id"] != outfit_id
        assert nxt["progress"]["rated"] == 1

    def test_unknown_outfit_404(self, world):
        resp = world["client"].post("/ratings", json={
            "user_id": "x", "outfit_id": "nope", "rating": 1,
        })
        assert resp.status_code == 404

    def test_group_mismatch_rejected(self, world):
        state = world["state"]
        outfit_id = sorted(state.eval_outfits)[0]
        wrong = "test" if state.eval_outfits[outfit_id].group == "control" else "control"
        resp = world["client"].post("/ratings", json={
            "user_id": "x", "outfit_id": outfit_id, "rating": 1, "group": wrong,
        })
        assert resp.status_code == 422


class TestAbtestResults:
    def test_results_match_library_analysis(self, world):
        client, state = world["client"], world["state"]
        # two users rate everything deterministically
        for user, bias in (("rater1", 0), ("rater2", 1)):
            while True:
                nxt = client.get("/evaluation/next", params={"user": user}).json()
                if nxt["done"]:
                    break
                oid = nxt["outfit"]["outfit_id"]
                rating = 1 if (len(oid) + bias) % 2 else 0
                client.post("/ratings", json={"user_id": user, "outfit_id": oid,
                                              "rating": rating})
        resp = client.get("/abtest/results")
        assert resp.status_code == 200
        body = resp.json()
        expected = ab_test_analysis(
            state.ratings.all_records(),
            templates_of={oid: ev.template for oid, ev in state.eval_outfits.items()},
        )
        assert body["control"]["mean"] == expected.control.mean
        assert body["test"]["mean"] == expected.test.mean
        assert body["relative_difference_pct"] == expected.relative_difference_pct
        assert "Tops | Jeans" in body["per_template"]
        text = client.get("/abtest/results", params={"format": "text"})
        assert "rel diff" in text.text

    def test_rating_log_roundtrip_restores_store(self, world):
        state, tmp = world["state"], world["tmp"]
        reopened = RatingStore.open(tmp / "ratings.jsonl")
        assert reopened.records == state.ratings.records


class TestEvalOutfitFile:
    def test_roundtrip(self, tmp_path):
        outfits = [
            EvalOutfit(outfit_id="test-0000", group="test", hero_id="a",
                       styling_ids=("b", "c"), template="T"),
            EvalOutfit(outfit_id="control-0000", group="control", hero_id="a",
                       styling_ids=("d", "e"), template="T"),
        ]
        path = tmp_path / "eval.jsonl"
        save_eval_outfits(outfits, path)
        assert list(load_eval_outfits(path).values()) == outfits
