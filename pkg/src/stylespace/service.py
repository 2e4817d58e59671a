"""HTTP service exposing scoring, generation, catalogue, projection and
rating-collection endpoints.

State is loaded once and treated as immutable; infer-mode embeddings for
every item are precomputed under both hero flags so scoring and generation
never re-run the network per request. Ratings are persisted to an
append-only line-delimited log and re-indexed on start.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .analysis import (
    ab_test_analysis,
    ABTestResult,
    format_ab_report,
    nearest_in_style,
    project_2d,
    RatingRecord,
)
from .catalog import Catalog, OutfitTemplate
from .embedder import EmbedderParams, embed_infer, stack_features
from .generator import EmbeddingCache, GenerationError, TemplateStats, complete_outfit_beam
from .scorer import outfit_logit, pairwise_dots, sigmoid


@dataclass(frozen=True)
class EvalOutfit:
    """One outfit of the rating study, with its (hidden) group assignment."""

    outfit_id: str
    group: str
    hero_id: str
    styling_ids: tuple[str, ...]
    template: str


@dataclass
class RatingStore:
    """Append-only log of rating records with last-write-wins indexing."""

    path: Path
    records: dict[tuple[str, str], RatingRecord] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)

    @classmethod
    def open(cls, path: str | Path) -> "RatingStore":
        store = cls(path=Path(path))
        if store.path.exists():
            with open(store.path, "r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    rec = json.loads(line)
                    record = RatingRecord(
                        user_id=rec["user_id"],
                        outfit_id=rec["outfit_id"],
                        group=rec["group"],
                        rating=int(rec["rating"]),
                        timestamp=float(rec.get("timestamp", 0.0)),
                    )
                    store.records[(record.user_id, record.outfit_id)] = record
        return store

    def add(self, record: RatingRecord) -> bool:
        """Persist and index a record; returns True when it overwrote one."""
        with self.lock:
            key = (record.user_id, record.outfit_id)
            overwrote = key in self.records
            self.records[key] = record
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps({
                    "user_id": record.user_id,
                    "outfit_id": record.outfit_id,
                    "group": record.group,
                    "rating": record.rating,
                    "timestamp": record.timestamp,
                }) + "\n")
        return overwrote

    def all_records(self) -> list[RatingRecord]:
        return list(self.records.values())

    def rated_by(self, user_id: str) -> set[str]:
        return {o for (u, o) in self.records if u == user_id}


@dataclass
class SessionState:
    catalog: Catalog
    params: EmbedderParams
    embeddings: EmbeddingCache
    ratings: RatingStore
    template_stats: TemplateStats
    eval_outfits: dict[str, EvalOutfit] = field(default_factory=dict)
    session_seed: int = 0
    clusters: dict[str, int] = field(default_factory=dict)
    min_results_observations: int = 8


def precompute_embeddings(catalog: Catalog, params: EmbedderParams) -> EmbeddingCache:
    """Infer-mode embeddings for every item under both hero flags."""
    ids = catalog.ids()
    feats = stack_features([catalog.features[i] for i in ids])
    as_hero = embed_infer(params, feats, np.ones(len(ids)))
    as_styling = embed_infer(params, feats, np.zeros(len(ids)))
    cache: EmbeddingCache = {}
    for row, item_id in enumerate(ids):
        cache[(item_id, 1)] = as_hero[row]
        cache[(item_id, 0)] = as_styling[row]
    return cache


def load_eval_outfits(path: str | Path) -> dict[str, EvalOutfit]:
    out: dict[str, EvalOutfit] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            rec = json.loads(line)
            ev = EvalOutfit(
                outfit_id=rec["outfit_id"],
                group=rec["group"],
                hero_id=rec["hero_id"],
                styling_ids=tuple(rec["styling_ids"]),
                template=rec.get("template", ""),
            )
            out[ev.outfit_id] = ev
    return out


def save_eval_outfits(outfits: list[EvalOutfit], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in outfits:
            fh.write(json.dumps({
                "outfit_id": ev.outfit_id,
                "group": ev.group,
                "hero_id": ev.hero_id,
                "styling_ids": list(ev.styling_ids),
                "template": ev.template,
            }) + "\n")


def user_outfit_order(state: SessionState, user_id: str) -> list[str]:
    """Deterministic per-user shuffle of the evaluation outfits."""
    digest = hashlib.sha256(f"{user_id}|{state.session_seed}".encode("utf-8")).digest()
    rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
    ids = sorted(state.eval_outfits)
    return [ids[i] for i in rng.permutation(len(ids))]


class ScorePayload(BaseModel):
    hero_id: str
    styling_ids: list[str]


class CompletePayload(BaseModel):
    hero_id: str
    styling_types: list[str] | None = None
    beam_width: int = 3


class RatingPayload(BaseModel):
    user_id: str
    outfit_id: str
    rating: int
    group: str | None = None


def _item_payload(state: SessionState, item_id: str, hero: bool = False) -> dict:
    item = state.catalog.items[item_id]
    payload = {
        "id": item.id,
        "product_type": item.product_type,
        "category": item.category,
        "title": item.title,
        "cluster": state.clusters.get(item.id),
    }
    if hero:
        payload["hero"] = True
    return payload


def create_app(state: SessionState) -> FastAPI:
    app = FastAPI(title="stylespace", version="0.1.0")

    @app.exception_handler(RequestValidationError)
    async def malformed_payload(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": str(exc.errors())})

    @app.get("/items")
    def list_items() -> dict:
        return {"items": [_item_payload(state, i) for i in state.catalog.ids()],
                "department": state.catalog.department}

    @app.get("/items/{item_id}/neighbors")
    def neighbors(item_id: str, type: str | None = None, k: int = 10,
                  as_hero: bool = True, candidates_as_hero: bool = False) -> dict:
        if item_id not in state.catalog:
            raise HTTPException(status_code=404, detail=f"unknown item id {item_id!r}")
        if k < 1:
            raise HTTPException(status_code=400, detail="k must be >= 1")
        ranked = nearest_in_style(
            item_id, state.catalog, state.params, k=k,
            query_as_hero=as_hero, candidates_as_hero=candidates_as_hero,
            type_filter=type, embeddings=state.embeddings,
        )
        return {"query": _item_payload(state, item_id), "neighbors": [
            {**_item_payload(state, i), "score": s} for i, s in ranked
        ]}

    @app.post("/outfits/score")
    def score(payload: ScorePayload) -> dict:
        ids = [payload.hero_id] + payload.styling_ids
        for item_id in ids:
            if item_id not in state.catalog:
                raise HTTPException(status_code=404, detail=f"unknown item id {item_id!r}")
        if not 2 <= len(ids) <= 5:
            raise HTTPException(status_code=422,
                                detail=f"outfit size {len(ids)} outside [2, 5]")
        if len(set(ids)) != len(ids):
            raise HTTPException(status_code=422, detail="outfit contains duplicate items")
        emb = np.stack([state.embeddings[(payload.hero_id, 1)]]
                       + [state.embeddings[(s, 0)] for s in payload.styling_ids])
        logit = outfit_logit(emb)
        pairs = [
            {"id_a": ids[i], "id_b": ids[j], "dot": d}
            for i, j, d in pairwise_dots(emb)
        ]
        return {"logit": logit, "score": float(sigmoid(logit)), "pairs": pairs}

    @app.post("/outfits/complete")
    def complete(payload: CompletePayload) -> dict:
        if payload.hero_id not in state.catalog:
            raise HTTPException(status_code=404,
                                detail=f"unknown item id {payload.hero_id!r}")
        hero_type = state.catalog.items[payload.hero_id].product_type
        if payload.styling_types is not None:
            template = OutfitTemplate(hero_type=hero_type,
                                      styling_types=tuple(payload.styling_types))
        else:
            try:
                template = state.template_stats.most_frequent(hero_type)
            except KeyError:
                raise HTTPException(
                    status_code=422,
                    detail=f"no template derivable: hero type {hero_type!r} has no outfit data",
                )
        try:
            result = complete_outfit_beam(
                payload.hero_id, template, state.catalog, state.params,
                beam_width=payload.beam_width, embeddings=state.embeddings,
            )
        except GenerationError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {
            "hero_id": result.outfit.hero_id,
            "styling_ids": list(result.outfit.styling_ids),
            "template": {"hero_type": template.hero_type,
                         "styling_types": list(template.styling_types)},
            "logit": result.logit,
            "score": result.score,
        }

    @app.get("/projection")
    def projection(method: str = "pca", seed: int = 0, limit: int | None = None) -> dict:
        ids = state.catalog.ids()
        if limit is not None:
            ids = ids[:limit]
        if len(ids) < 2:
            raise HTTPException(status_code=422, detail="need at least 2 items to project")
        emb = np.stack([state.embeddings[(i, 0)] for i in ids])
        try:
            points = project_2d(emb, method=method, seed=seed)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"method": method, "points": [
            {**_item_payload(state, item_id), "x": float(x), "y": float(y)}
            for item_id, (x, y) in zip(ids, points)
        ]}

    @app.get("/evaluation/next")
    def evaluation_next(user: str) -> dict:
        if not state.eval_outfits:
            raise HTTPException(status_code=422, detail="no evaluation session loaded")
        order = user_outfit_order(state, user)
        rated = state.ratings.rated_by(user)
        progress = {"rated": len([o for o in order if o in rated]), "total": len(order)}
        for outfit_id in order:
            if outfit_id not in rated:
                ev = state.eval_outfits[outfit_id]
                # blinding: the group assignment is not exposed to raters
                return {
                    "outfit": {
                        "outfit_id": ev.outfit_id,
                        "items": [_item_payload(state, ev.hero_id)]
                        + [_item_payload(state, s) for s in ev.styling_ids],
                    },
                    "progress": progress,
                    "done": False,
                }
        return {"outfit": None, "progress": progress, "done": True}

    @app.post("/ratings")
    def record_rating(payload: RatingPayload) -> dict:
        ev = state.eval_outfits.get(payload.outfit_id)
        if ev is None:
            raise HTTPException(status_code=404,
                                detail=f"unknown outfit id {payload.outfit_id!r}")
        if payload.rating not in (0, 1):
            raise HTTPException(status_code=422, detail="rating must be 0 or 1")
        if payload.group is not None and payload.group != ev.group:
            raise HTTPException(status_code=422,
                                detail="group does not match the stored assignment")
        record = RatingRecord(
            user_id=payload.user_id,
            outfit_id=payload.outfit_id,
            group=ev.group,
            rating=payload.rating,
            timestamp=time.time(),
        )
        overwrote = state.ratings.add(record)
        return {"count": len(state.ratings.records), "overwrote": overwrote}

    @app.get("/abtest/results")
    def abtest_results(format: str = "json", min_observations: int | None = None):
        records = state.ratings.all_records()
        threshold = (state.min_results_observations
                     if min_observations is None else min_observations)
        if len(records) < threshold:
            raise HTTPException(
                status_code=422,
                detail=f"only {len(records)} observations; need {threshold} before results",
            )
        templates_of = {oid: ev.template for oid, ev in state.eval_outfits.items()}
        try:
            result = ab_test_analysis(records, templates_of=templates_of)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        if format == "text":
            return PlainTextResponse(format_ab_report(result))
        return _abtest_json(result)

    return app


def _group_json(stats) -> dict:
    return {
        "mean": stats.mean,
        "var_user": stats.var_user,
        "var_outfit": stats.var_outfit,
        "var_residual": stats.var_residual,
        "se_mean": stats.se_mean,
        "n_users": stats.n_users,
        "n_outfits": stats.n_outfits,
        "n_observations": stats.n_observations,
    }


def _abtest_json(result: ABTestResult) -> dict:
    return {
        "control": _group_json(result.control),
        "test": _group_json(result.test),
        "relative_difference_pct": result.relative_difference_pct,
        "t_statistic": result.t_statistic,
        "p_value": result.p_value,
        "no_variance": result.no_variance,
        "per_template": {
            name: _abtest_json(sub) for name, sub in result.per_template.items()
        },
    }


def build_state(
    catalog: Catalog,
    params: EmbedderParams,
    outfits_for_templates=None,
    eval_outfits_path: str | Path | None = None,
    ratings_log_path: str | Path = "ratings.jsonl",
    session_seed: int = 0,
    clusters: dict[str, int] | None = None,
    min_results_observations: int = 8,
) -> SessionState:
    from .generator import template_frequencies

    stats = (template_frequencies(outfits_for_templates, catalog)
             if outfits_for_templates is not None else TemplateStats(counts={}))
    return SessionState(
        catalog=catalog,
        params=params,
        embeddings=precompute_embeddings(catalog, params),
        ratings=RatingStore.open(ratings_log_path),
        template_stats=stats,
        eval_outfits=(load_eval_outfits(eval_outfits_path) if eval_outfits_path else {}),
        session_seed=session_seed,
        clusters=clusters or {},
        min_results_observations=min_results_observations,
    )


def mount_frontend(app: FastAPI, directory: str | Path) -> None:
    """Serve the built browser UI from a static directory, if present."""
    directory = Path(directory)
    if directory.is_dir():
        app.mount("/", StaticFiles(directory=directory, html=True), name="ui")
