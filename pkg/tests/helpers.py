"""Shared fixtures and oracles for the test suite."""

from __future__ import annotations

import numpy as np

from stylespace.embedder import EmbedderParams, backward_gradients, embed_batch
from stylespace.synth import SynthConfig, generate_synthetic_dataset
from stylespace.trainer import bce_loss, _outfit_logits


def small_synth(n_items_per_type=12, n_clusters=3, noise=0.0, counts=None, seed=0,
                n_types=3):
    """A small planted-cluster dataset for fast training tests."""
    types = (("Tops", ("blouses",)), ("Jeans", ("skinny jeans",)),
             ("Shoes", ("heels",)), ("Bags", ("clutch bags",)),
             ("Skirts", ("mini skirts",)))[:n_types]
    config = SynthConfig(
        n_items_per_type=n_items_per_type,
        product_types=types,
        n_style_clusters=n_clusters,
        noise_scale=noise,
        outfit_counts_by_size=counts or {2: 6, 3: 4},
        seed=seed,
    )
    return generate_synthetic_dataset(config)


def end_to_end_loss_and_grads(
    params: EmbedderParams,
    features,
    flags: np.ndarray,
    spans: list[tuple[int, int]],
    labels: np.ndarray,
    seed: int = 0,
):
    """Mean BCE of outfit scores, plus all parameter gradients; mirrors one
    training step so finite differences can check the whole chain
    loss -> pairwise-dot scorer -> network."""
    emb, trace = embed_batch(params, features, flags, mode="train", seed=seed)
    logits, logit_grads = _outfit_logits(emb, spans)
    losses, dlogit = bce_loss(logits, labels)
    loss = float(losses.mean())
    demb = np.zeros_like(emb)
    for k, (r0, r1) in enumerate(spans):
        demb[r0:r1] = dlogit[k] / len(spans) * logit_grads[k]
    grads = backward_gradients(params, trace, demb)
    return loss, grads.flat()


def finite_difference_check(params, loss_fn, grads, samples_per_tensor=25,
                            step=1e-5, seed=0):
    """Yield (key, analytic, numeric) over randomly sampled parameter entries."""
    rng = np.random.default_rng(seed)
    for key, arr in params.trainable().items():
        flat = arr.reshape(-1)
        count = min(samples_per_tensor, flat.size)
        for idx in rng.choice(flat.size, size=count, replace=False):
            orig = flat[idx]
            flat[idx] = orig + step
            up = loss_fn()
            flat[idx] = orig - step
            down = loss_fn()
            flat[idx] = orig
            yield key, grads[key].reshape(-1)[idx], (up - down) / (2 * step)


def brute_force_auc(scores, labels):
    """O(n^2) pair-counting oracle: concordant pairs plus half the ties."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum()
    ties = (pos[:, None] == neg[None, :]).sum()
    return (wins + 0.5 * ties) / (len(pos) * len(neg))
