"""Batch entry points wiring the pipeline end to end.

Subcommands: synth, split, train, eval, ablate, generate, abtest, serve.
Every subcommand is reproducible under --seed and exits non-zero with a
one-line diagnostic on failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .catalog import CatalogError, OutfitTemplate, load_catalog, load_outfits, save_catalog, save_outfits
from .embedder import EmbedderArch, load_params, save_params
from .generator import GenerationError, complete_outfit_beam, template_frequencies
from .sampler import build_styling_distribution
from .service import EvalOutfit, build_state, create_app, mount_frontend, save_eval_outfits
from .splitter import (
    SplitError,
    assemble_split,
    assign_outfits,
    build_graph,
    load_split,
    louvain_partition,
    save_split,
)
from .synth import SynthConfig, SynthError, default_outfit_counts, generate_synthetic_dataset, save_ground_truth
from .trainer import TrainingConfig, ablation_study, evaluate_auc, train


def _parse_features(text: str) -> frozenset[str]:
    return frozenset(p.strip() for p in text.split(",") if p.strip())


def _arch_from_args(args) -> EmbedderArch:
    return EmbedderArch(
        d_text=args.d_text, d_vis=args.d_vis, d_cat=args.d_cat,
        d_hidden=args.d_hidden, d_out=args.d_out, dropout=args.dropout,
    )


def _add_arch_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--d-text", type=int, default=256, help="text branch width")
    parser.add_argument("--d-vis", type=int, default=256, help="visual branch width")
    parser.add_argument("--d-cat", type=int, default=32, help="category branch width")
    parser.add_argument("--d-hidden", type=int, default=256, help="trunk hidden width")
    parser.add_argument("--d-out", type=int, default=256, help="embedding width")
    parser.add_argument("--dropout", type=float, default=0.5, help="dropout rate")


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, default=30, help="training epochs")
    parser.add_argument("--batch-size", type=int, default=64, help="outfits per batch")
    parser.add_argument("--learning-rate", type=float, default=1e-3, help="Adam step size")
    parser.add_argument("--features", type=_parse_features,
                        default=frozenset(("text", "vis", "cat", "hero")),
                        help="comma-separated subset of text,vis,cat,hero")
    _add_arch_args(parser)


def _load_split_sides(args):
    """Common (catalog, train positives, test positives) loading."""
    catalog = load_catalog(args.catalog)
    outfits = load_outfits(args.outfits, catalog).positives()
    split = load_split(args.split)
    train_set, test_set, _ = assign_outfits(outfits, split)
    return catalog, train_set, test_set


def cmd_synth(args) -> int:
    if args.config:
        config = SynthConfig.from_file(args.config)
        if args.seed is not None:
            config = replace(config, seed=args.seed)
    else:
        config = SynthConfig(
            n_items_per_type=args.items_per_type,
            n_style_clusters=args.clusters,
            noise_scale=args.noise_scale,
            outfit_counts_by_size=default_outfit_counts(args.outfits_total),
            seed=args.seed if args.seed is not None else 0,
        )
    catalog, outfits, clusters = generate_synthetic_dataset(config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_catalog(catalog, out / "catalog.jsonl")
    save_outfits(outfits, out / "outfits.jsonl")
    save_ground_truth(clusters, out / "clusters.jsonl")
    print(f"wrote {len(catalog)} items, {len(outfits)} outfits to {out}/")
    return 0


def cmd_split(args) -> int:
    catalog = load_catalog(args.catalog)
    outfits = load_outfits(args.outfits, catalog).positives()
    graph = build_graph(outfits)
    louvain = louvain_partition(graph, seed=args.seed)
    split = assemble_split(louvain.communities, catalog, target_ratio=args.ratio,
                           stratify_on=args.stratify_on)
    train_set, test_set, dropped = assign_outfits(outfits, split)
    split = replace(split, dropped_outfits=dropped)
    save_split(split, args.out, modularity_value=louvain.modularity)
    overlap = split.items_on("train") & split.items_on("test")
    print(
        f"split: {len(split.items_on('train'))} train / {len(split.items_on('test'))} test items"
        f" (ratio {split.achieved_ratio:.3f}), outfits {len(train_set)}/{len(test_set)},"
        f" dropped {dropped}, modularity {louvain.modularity:.4f}, item overlap {len(overlap)}"
    )
    return 0


def cmd_train(args) -> int:
    catalog, train_set, test_set = _load_split_sides(args)
    config = TrainingConfig(
        feature_set=args.features, epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.learning_rate, dropout=args.dropout, seed=args.seed,
    )
    dist = build_styling_distribution(train_set, catalog)
    val, val_dist = (None, None)
    if args.track_val and len(test_set) > 0:
        val = test_set
        val_dist = build_styling_distribution(test_set, catalog)
    params, history = train(config, catalog, train_set, dist, arch=_arch_from_args(args),
                            val_positives=val, val_dist=val_dist)
    save_params(params, args.out)
    if args.history:
        with open(args.history, "w", encoding="utf-8") as fh:
            for ep in history.epochs:
                fh.write(json.dumps({
                    "epoch": ep.epoch, "mean_loss": ep.mean_loss,
                    "n_examples": ep.n_examples, "wall_time": ep.wall_time,
                    "val_auc": ep.val_auc,
                }) + "\n")
    final_loss = history.epochs[-1].mean_loss if history.epochs else float("nan")
    print(f"trained {config.epochs} epochs on {len(train_set)} positives;"
          f" final mean loss {final_loss:.4f}; checkpoint {args.out}")
    return 0


def cmd_eval(args) -> int:
    catalog, _, test_set = _load_split_sides(args)
    if len(test_set) == 0:
        print("error: test side has no outfits", file=sys.stderr)
        return 1
    params = load_params(args.params)
    dist = build_styling_distribution(test_set, catalog)
    auc = evaluate_auc(params, catalog, test_set, dist, seed=args.seed,
                       feature_set=args.features)
    print(f"test AUC {auc:.4f} on {len(test_set)} positives + fresh negatives")
    return 0


def cmd_ablate(args) -> int:
    catalog, train_set, test_set = _load_split_sides(args)
    base = TrainingConfig(
        epochs=args.epochs, batch_size=args.batch_size,
        learning_rate=args.learning_rate, dropout=args.dropout, seed=args.seed,
    )
    result = ablation_study(base, catalog, train_set, test_set,
                            repeats=args.repeats, arch=_arch_from_args(args))
    table = result.as_table()
    if args.out:
        Path(args.out).write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def cmd_generate(args) -> int:
    catalog = load_catalog(args.catalog)
    params = load_params(args.params)
    outfits = load_outfits(args.outfits, catalog).positives() if args.outfits else None
    stats = template_frequencies(outfits, catalog) if outfits else None
    results = []
    for hero_id in args.heroes:
        if hero_id not in catalog:
            print(f"error: unknown hero item {hero_id!r}", file=sys.stderr)
            return 1
        hero_type = catalog.items[hero_id].product_type
        if args.template:
            template = OutfitTemplate(hero_type=hero_type,
                                      styling_types=tuple(args.template.split(",")))
        elif stats is not None:
            template = stats.most_frequent(hero_type)
        else:
            print("error: need --template or --outfits for template statistics",
                  file=sys.stderr)
            return 1
        scored = complete_outfit_beam(hero_id, template, catalog, params,
                                      beam_width=args.beam_width)
        results.append({
            "hero_id": hero_id,
            "styling_ids": list(scored.outfit.styling_ids),
            "logit": scored.logit,
            "score": scored.score,
        })
        print(f"{hero_id}: {' + '.join(scored.outfit.styling_ids)}"
              f" (score {scored.score:.4f})")
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            for rec in results:
                fh.write(json.dumps(rec) + "\n")
    return 0


def cmd_abtest(args) -> int:
    catalog = load_catalog(args.catalog)
    params = load_params(args.params)
    outfits = load_outfits(args.outfits, catalog).positives()
    stats = template_frequencies(outfits, catalog)
    templates = [t for t, _ in stats.top_templates(args.templates)]
    if len(templates) < args.templates:
        print(f"error: only {len(templates)} templates available", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    eval_outfits: list[EvalOutfit] = []
    pair = 0
    for template in templates:
        hero_pool = [it.id for it in catalog.items_of_type(template.hero_type)]
        if not hero_pool:
            print(f"error: no items of hero type {template.hero_type!r}", file=sys.stderr)
            return 1
        chosen = rng.choice(len(hero_pool), size=min(args.outfits_per_template,
                                                     len(hero_pool)), replace=False)
        template_name = " | ".join([template.hero_type, *template.styling_types])
        for idx in sorted(int(i) for i in chosen):
            hero_id = hero_pool[idx]
            generated = complete_outfit_beam(hero_id, template, catalog, params,
                                             beam_width=args.beam_width)
            # control: random same-type picks from the same pool, no style signal
            taken = {hero_id}
            random_styling: list[str] = []
            for styling_type in template.styling_types:
                cands = [it.id for it in catalog.items_of_type(styling_type)
                         if it.id not in taken]
                pick = cands[int(rng.integers(len(cands)))]
                random_styling.append(pick)
                taken.add(pick)
            eval_outfits.append(EvalOutfit(
                outfit_id=f"test-{pair:04d}", group="test", hero_id=hero_id,
                styling_ids=generated.outfit.styling_ids, template=template_name,
            ))
            eval_outfits.append(EvalOutfit(
                outfit_id=f"control-{pair:04d}", group="control", hero_id=hero_id,
                styling_ids=tuple(random_styling), template=template_name,
            ))
            pair += 1
    save_eval_outfits(eval_outfits, args.out)
    n_test = sum(1 for e in eval_outfits if e.group == "test")
    print(f"wrote {len(eval_outfits)} evaluation outfits ({n_test} per group,"
          f" {len(templates)} templates) to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    catalog = load_catalog(args.catalog)
    params = load_params(args.params)
    outfits = load_outfits(args.outfits, catalog).positives() if args.outfits else None
    clusters = None
    if args.clusters:
        from .synth import load_ground_truth

        clusters = load_ground_truth(args.clusters)
    state = build_state(
        catalog, params,
        outfits_for_templates=outfits,
        eval_outfits_path=args.eval_outfits,
        ratings_log_path=args.ratings_log,
        session_seed=args.seed,
        clusters=clusters,
        min_results_observations=args.min_observations,
    )
    app = create_app(state)
    if args.frontend:
        mount_frontend(app, args.frontend)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stylespace",
        description="Outfit compatibility engine: data, training, generation, serving",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_parser(name: str, help: str) -> argparse.ArgumentParser:
        return sub.add_parser(name, help=help,
                              formatter_class=argparse.ArgumentDefaultsHelpFormatter)

    p = add_parser("synth", help="generate a synthetic catalogue and outfits")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--config", help="SynthConfig JSON file")
    p.add_argument("--seed", type=int, default=None, help="RNG seed (overrides config)")
    p.add_argument("--items-per-type", type=int, default=60, help="items per product type")
    p.add_argument("--clusters", type=int, default=6, help="planted style clusters")
    p.add_argument("--noise-scale", type=float, default=0.1, help="latent noise level")
    p.add_argument("--outfits-total", type=int, default=1000, help="total outfits")
    p.set_defaults(func=cmd_synth)

    p = add_parser("split", help="leak-free train/test split of items and outfits")
    p.add_argument("--catalog", required=True)
    p.add_argument("--outfits", required=True)
    p.add_argument("--out", required=True, help="split file")
    p.add_argument("--ratio", type=float, default=0.76, help="train fraction of items")
    p.add_argument("--stratify-on", default=None, help="item attribute, e.g. season")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.set_defaults(func=cmd_split)

    p = add_parser("train", help="train the embedder on the split's train side")
    p.add_argument("--catalog", required=True)
    p.add_argument("--outfits", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", required=True, help="checkpoint file (.npz)")
    p.add_argument("--history", help="per-epoch history file")
    p.add_argument("--track-val", action="store_true",
                   help="record test AUC per epoch")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = add_parser("eval", help="AUC on the split's test side with fresh negatives")
    p.add_argument("--catalog", required=True)
    p.add_argument("--outfits", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--features", type=_parse_features,
                   default=frozenset(("text", "vis", "cat", "hero")))
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.set_defaults(func=cmd_eval)

    p = add_parser("ablate", help="train every standard feature subset")
    p.add_argument("--catalog", required=True)
    p.add_argument("--outfits", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--out", help="report file (tab-delimited)")
    p.add_argument("--repeats", type=int, default=1, help="training runs per feature set")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    _add_train_args(p)
    p.set_defaults(func=cmd_ablate)

    p = add_parser("generate", help="complete outfits for hero items")
    p.add_argument("--catalog", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--outfits", help="positive outfits for template statistics")
    p.add_argument("--template", help="comma-separated styling types")
    p.add_argument("--beam-width", type=int, default=3, help="beam width")
    p.add_argument("--out", help="write generated outfits to this file")
    p.add_argument("heroes", nargs="+", help="hero item ids")
    p.set_defaults(func=cmd_generate)

    p = add_parser("abtest", help="build paired test/control outfits for rating")
    p.add_argument("--catalog", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--outfits", required=True,
                   help="positive outfits for template statistics")
    p.add_argument("--out", required=True, help="evaluation outfits file")
    p.add_argument("--templates", type=int, default=3, help="number of top templates")
    p.add_argument("--outfits-per-template", type=int, default=34, help="hero items per template")
    p.add_argument("--beam-width", type=int, default=3, help="beam width")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.set_defaults(func=cmd_abtest)

    p = add_parser("serve", help="start the HTTP service")
    p.add_argument("--catalog", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--outfits", help="positive outfits for template statistics")
    p.add_argument("--eval-outfits", help="rating-study outfits file")
    p.add_argument("--ratings-log", default="ratings.jsonl", help="append-only rating log")
    p.add_argument("--min-observations", type=int, default=8,
                   help="ratings required before results are shown")
    p.add_argument("--clusters", help="ground-truth cluster file for UI swatches")
    p.add_argument("--frontend", help="directory of built UI assets to serve")
    p.add_argument("--host", default="127.0.0.1", help="bind address")
    p.add_argument("--port", type=int, default=8600, help="listen port")
    p.add_argument("--seed", type=int, default=0, help="RNG seed")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CatalogError, SynthError, SplitError, GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: missing file: {exc.filename}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
