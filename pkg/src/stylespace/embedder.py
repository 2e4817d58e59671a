"""Item embedding network: three per-modality dense branches, concatenation
with the hero flag, and a two-layer trunk producing style embeddings.

Forward and backward passes are implemented directly in numpy, including
batch normalization, so gradients can be verified against finite
differences. Layer order is fixed: text, vis, cat branches, then trunk1
over the concatenation (branch outputs + hero flag), then trunk2.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .catalog import CATEGORY_DIM, TEXT_DIM, VISUAL_DIM, ItemFeatures

LAYER_NAMES = ("text", "vis", "cat", "trunk1", "trunk2")

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class EmbedderArch:
    """Layer widths and regularization settings.

    `batch_norm` is either one flag for all five layers or a per-layer
    tuple in LAYER_NAMES order.
    """

    d_text_in: int = TEXT_DIM
    d_vis_in: int = VISUAL_DIM
    d_cat_in: int = CATEGORY_DIM
    d_text: int = 256
    d_vis: int = 256
    d_cat: int = 32
    d_hidden: int = 256
    d_out: int = 256
    dropout: float = 0.5
    bn_momentum: float = 0.9
    bn_eps: float = 1e-5
    batch_norm: bool | tuple[bool, bool, bool, bool, bool] = True

    def __post_init__(self) -> None:
        dims = (
            self.d_text_in, self.d_vis_in, self.d_cat_in,
            self.d_text, self.d_vis, self.d_cat, self.d_hidden, self.d_out,
        )
        if any(d <= 0 for d in dims):
            raise ValueError(f"all dimensions must be positive, got {dims}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError(f"dropout must be in [0, 1), got {self.dropout}")

    @property
    def d_concat(self) -> int:
        """Width of the trunk input: branch outputs plus the hero flag."""
        return self.d_text + self.d_vis + self.d_cat + 1

    def layer_dims(self) -> dict[str, tuple[int, int]]:
        return {
            "text": (self.d_text_in, self.d_text),
            "vis": (self.d_vis_in, self.d_vis),
            "cat": (self.d_cat_in, self.d_cat),
            "trunk1": (self.d_concat, self.d_hidden),
            "trunk2": (self.d_hidden, self.d_out),
        }

    def bn_flags(self) -> dict[str, bool]:
        if isinstance(self.batch_norm, bool):
            return {name: self.batch_norm for name in LAYER_NAMES}
        flags = tuple(self.batch_norm)
        if len(flags) != len(LAYER_NAMES):
            raise ValueError("batch_norm tuple must have one flag per layer")
        return dict(zip(LAYER_NAMES, flags))


@dataclass
class LayerParams:
    """Weights, bias and batch-norm state of one dense layer."""

    w: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    batch_norm: bool


@dataclass
class EmbedderParams:
    arch: EmbedderArch
    layers: dict[str, LayerParams]

    def trainable(self) -> dict[str, np.ndarray]:
        """Flat view of the trainable tensors, keyed `layer.field`."""
        out: dict[str, np.ndarray] = {}
        for name, lp in self.layers.items():
            out[f"{name}.w"] = lp.w
            out[f"{name}.b"] = lp.b
            out[f"{name}.gamma"] = lp.gamma
            out[f"{name}.beta"] = lp.beta
        return out


@dataclass
class LayerGrads:
    w: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    beta: np.ndarray


@dataclass
class EmbedderGrads:
    layers: dict[str, LayerGrads]

    def flat(self) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for name, lg in self.layers.items():
            out[f"{name}.w"] = lg.w
            out[f"{name}.b"] = lg.b
            out[f"{name}.gamma"] = lg.gamma
            out[f"{name}.beta"] = lg.beta
        return out


@dataclass
class LayerTrace:
    """Intermediates of one layer's forward pass, kept for backward."""

    x: np.ndarray          # layer input
    z: np.ndarray          # affine output
    h: np.ndarray          # batch-norm output (or z when bn is off)
    bn_mean: np.ndarray | None
    bn_var: np.ndarray | None
    x_hat: np.ndarray | None
    dropout_mask: np.ndarray | None


@dataclass
class ForwardTrace:
    mode: str
    batch_size: int
    layers: dict[str, LayerTrace] = field(default_factory=dict)


@dataclass(frozen=True)
class FeatureBatch:
    """Stacked per-modality feature matrices for one batch of items."""

    text: np.ndarray
    vis: np.ndarray
    cat: np.ndarray

    def __len__(self) -> int:
        return self.text.shape[0]


def stack_features(features: Sequence[ItemFeatures]) -> FeatureBatch:
    return FeatureBatch(
        text=np.stack([f.text_embedding for f in features]),
        vis=np.stack([f.visual_embedding for f in features]),
        cat=np.stack([f.category_embedding for f in features]),
    )


def init_params(arch: EmbedderArch, seed: int) -> EmbedderParams:
    """He-initialized weights (variance 2/fan_in), zero biases, identity batch norm."""
    rng = np.random.default_rng(seed)
    bn_flags = arch.bn_flags()
    layers: dict[str, LayerParams] = {}
    for name, (d_in, d_out) in arch.layer_dims().items():
        std = np.sqrt(2.0 / d_in)
        layers[name] = LayerParams(
            w=rng.normal(0.0, std, size=(d_in, d_out)),
            b=np.zeros(d_out),
            gamma=np.ones(d_out),
            beta=np.zeros(d_out),
            running_mean=np.zeros(d_out),
            running_var=np.ones(d_out),
            batch_norm=bn_flags[name],
        )
    return EmbedderParams(arch=arch, layers=layers)


def _layer_forward(
    lp: LayerParams,
    x: np.ndarray,
    train: bool,
    eps: float,
    momentum: float,
    dropout: float,
    rng: np.random.Generator | None,
) -> tuple[np.ndarray, LayerTrace]:
    z = x @ lp.w + lp.b
    bn_mean = bn_var = x_hat = None
    if lp.batch_norm:
        if train:
            bn_mean = z.mean(axis=0)
            bn_var = z.var(axis=0)
            x_hat = (z - bn_mean) / np.sqrt(bn_var + eps)
            lp.running_mean = momentum * lp.running_mean + (1.0 - momentum) * bn_mean
            lp.running_var = momentum * lp.running_var + (1.0 - momentum) * bn_var
        else:
            x_hat = (z - lp.running_mean) / np.sqrt(lp.running_var + eps)
        h = lp.gamma * x_hat + lp.beta
        if not train:
            x_hat = None  # not needed for backward; infer traces stay slim
    else:
        h = z
    a = np.maximum(h, 0.0)
    mask = None
    if train and dropout > 0.0:
        assert rng is not None
        mask = rng.random(a.shape) >= dropout
        a = a * mask / (1.0 - dropout)
    return a, LayerTrace(x=x, z=z, h=h, bn_mean=bn_mean, bn_var=bn_var,
                         x_hat=x_hat, dropout_mask=mask)


def embed_batch(
    params: EmbedderParams,
    features: FeatureBatch | Sequence[ItemFeatures],
    hero_flags: Sequence[int] | np.ndarray,
    mode: str = "infer",
    seed: int = 0,
) -> tuple[np.ndarray, ForwardTrace]:
    """Embed a batch of items.

    Infer mode uses running batch-norm statistics and no dropout, and is a
    pure function of (params, features, flags). Train mode uses batch
    statistics, applies a seeded dropout mask and updates the running
    statistics in place.
    """
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    if not isinstance(features, FeatureBatch):
        features = stack_features(features)
    batch = len(features)
    if batch == 0:
        raise ValueError("batch must be non-empty")
    train = mode == "train"
    if train and batch < 2:
        raise ValueError("train mode needs batch size >= 2 for batch statistics")
    arch = params.arch
    for name, mat, d_in in (
        ("text", features.text, arch.d_text_in),
        ("vis", features.vis, arch.d_vis_in),
        ("cat", features.cat, arch.d_cat_in),
    ):
        if mat.shape != (batch, d_in):
            raise ValueError(f"{name} features must have shape {(batch, d_in)}, got {mat.shape}")
    flags = np.asarray(hero_flags, dtype=np.float64).reshape(batch, 1)

    rng = np.random.default_rng(seed) if train else None
    dropout = arch.dropout if train else 0.0
    trace = ForwardTrace(mode=mode, batch_size=batch)

    branch_out = {}
    for name, x in (("text", features.text), ("vis", features.vis), ("cat", features.cat)):
        a, lt = _layer_forward(params.layers[name], np.asarray(x, dtype=np.float64),
                               train, arch.bn_eps, arch.bn_momentum, dropout, rng)
        branch_out[name] = a
        trace.layers[name] = lt

    concat = np.concatenate([branch_out["text"], branch_out["vis"], branch_out["cat"], flags], axis=1)
    a, lt = _layer_forward(params.layers["trunk1"], concat, train,
                           arch.bn_eps, arch.bn_momentum, dropout, rng)
    trace.layers["trunk1"] = lt
    emb, lt = _layer_forward(params.layers["trunk2"], a, train,
                             arch.bn_eps, arch.bn_momentum, dropout, rng)
    trace.layers["trunk2"] = lt
    if not train:
        trace.layers.clear()
    return emb, trace


def embed_infer(
    params: EmbedderParams,
    features: FeatureBatch | Sequence[ItemFeatures],
    hero_flags: Sequence[int] | np.ndarray,
) -> np.ndarray:
    emb, _ = embed_batch(params, features, hero_flags, mode="infer")
    return emb


def _layer_backward(
    lp: LayerParams,
    lt: LayerTrace,
    d_out: np.ndarray,
    eps: float,
    dropout: float,
) -> tuple[LayerGrads, np.ndarray]:
    if lt.dropout_mask is not None:
        d_out = d_out * lt.dropout_mask / (1.0 - dropout)
    d_h = d_out * (lt.h > 0.0)
    if lp.batch_norm:
        assert lt.bn_mean is not None and lt.bn_var is not None and lt.x_hat is not None
        batch = lt.z.shape[0]
        d_gamma = np.sum(d_h * lt.x_hat, axis=0)
        d_beta = np.sum(d_h, axis=0)
        d_xhat = d_h * lp.gamma
        inv_std = 1.0 / np.sqrt(lt.bn_var + eps)
        centered = lt.z - lt.bn_mean
        d_var = np.sum(d_xhat * centered, axis=0) * (-0.5) * inv_std**3
        d_mean = np.sum(-d_xhat * inv_std, axis=0) + d_var * np.mean(-2.0 * centered, axis=0)
        d_z = d_xhat * inv_std + d_var * 2.0 * centered / batch + d_mean / batch
    else:
        d_gamma = np.zeros_like(lp.gamma)
        d_beta = np.zeros_like(lp.beta)
        d_z = d_h
    d_w = lt.x.T @ d_z
    d_b = np.sum(d_z, axis=0)
    d_x = d_z @ lp.w.T
    return LayerGrads(w=d_w, b=d_b, gamma=d_gamma, beta=d_beta), d_x


def backward_gradients(
    params: EmbedderParams,
    trace: ForwardTrace,
    output_gradients: np.ndarray,
) -> EmbedderGrads:
    """Reverse-mode gradients of all parameters given d(loss)/d(embedding)."""
    if trace.mode != "train":
        raise ValueError("backward_gradients requires a train-mode forward trace")
    arch = params.arch
    d_out = np.asarray(output_gradients, dtype=np.float64)
    if d_out.shape != (trace.batch_size, arch.d_out):
        raise ValueError(
            f"output_gradients must have shape {(trace.batch_size, arch.d_out)}, got {d_out.shape}"
        )
    grads: dict[str, LayerGrads] = {}
    lg, d_x = _layer_backward(params.layers["trunk2"], trace.layers["trunk2"],
                              d_out, arch.bn_eps, arch.dropout)
    grads["trunk2"] = lg
    lg, d_concat = _layer_backward(params.layers["trunk1"], trace.layers["trunk1"],
                                   d_x, arch.bn_eps, arch.dropout)
    grads["trunk1"] = lg
    # split the concat gradient back into branches; the flag column has no parameters
    offsets = np.cumsum([arch.d_text, arch.d_vis, arch.d_cat])
    d_text, d_vis, d_cat = np.split(d_concat[:, : offsets[-1]], offsets[:-1], axis=1)
    for name, d_branch in (("text", d_text), ("vis", d_vis), ("cat", d_cat)):
        lg, _ = _layer_backward(params.layers[name], trace.layers[name],
                                d_branch, arch.bn_eps, arch.dropout)
        grads[name] = lg
    return EmbedderGrads(layers={name: grads[name] for name in LAYER_NAMES})


def save_params(params: EmbedderParams, path: str | Path) -> None:
    """Checkpoint all tensors with named keys; round-trips exactly."""
    arch = params.arch
    meta = {
        "version": CHECKPOINT_VERSION,
        "arch": {
            "d_text_in": arch.d_text_in, "d_vis_in": arch.d_vis_in, "d_cat_in": arch.d_cat_in,
            "d_text": arch.d_text, "d_vis": arch.d_vis, "d_cat": arch.d_cat,
            "d_hidden": arch.d_hidden, "d_out": arch.d_out,
            "dropout": arch.dropout, "bn_momentum": arch.bn_momentum, "bn_eps": arch.bn_eps,
            "batch_norm": list(arch.batch_norm) if isinstance(arch.batch_norm, tuple)
            else arch.batch_norm,
        },
    }
    tensors: dict[str, np.ndarray] = {}
    for name, lp in params.layers.items():
        for fieldname in ("w", "b", "gamma", "beta", "running_mean", "running_var"):
            tensors[f"{name}.{fieldname}"] = getattr(lp, fieldname)
    np.savez(path, __meta__=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
             **tensors)


def load_params(path: str | Path) -> EmbedderParams:
    with np.load(path) as data:
        meta = json.loads(bytes(data["__meta__"]).decode("utf-8"))
        if meta["version"] != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta['version']}")
        arch_dict = dict(meta["arch"])
        if isinstance(arch_dict["batch_norm"], list):
            arch_dict["batch_norm"] = tuple(arch_dict["batch_norm"])
        arch = EmbedderArch(**arch_dict)
        bn_flags = arch.bn_flags()
        layers: dict[str, LayerParams] = {}
        for name in LAYER_NAMES:
            layers[name] = LayerParams(
                w=data[f"{name}.w"], b=data[f"{name}.b"],
                gamma=data[f"{name}.gamma"], beta=data[f"{name}.beta"],
                running_mean=data[f"{name}.running_mean"],
                running_var=data[f"{name}.running_var"],
                batch_norm=bn_flags[name],
            )
    return EmbedderParams(arch=arch, layers=layers)
