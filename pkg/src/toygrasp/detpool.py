"""Segmentation-restricted attention encoder with four pooling variants.

A small vision transformer whose attention can be restricted so that object
patch tokens and non-object patch tokens never attend each other. Pooling the
object tokens then yields an embedding that depends only on the object's
pixels and the flag geometry: background content cannot leak in, which is the
checkable claim this module exists to demonstrate. Gradients are exact
reverse-mode; everything runs in float64.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import _nn
from .errors import (
    DimensionMismatch,
    EmptyObject,
    NonFiniteActivation,
    SchemaViolation,
)
from .io import load_tensors, save_tensors

CHANNELS = 3


@dataclass(frozen=True)
class EncoderConfig:
    image_height: int = 32
    image_width: int = 32
    patch_size: int = 4
    embed_dim: int = 64
    layers: int = 2
    heads: int = 4
    mlp_ratio: float = 4.0
    include_cls: bool = False
    #: Debug-only: skip the attention mask in Det mode (negative control for
    #: the background-invariance check).
    debug_disable_attention_mask: bool = False

    def __post_init__(self) -> None:
        if self.image_height % self.patch_size or self.image_width % self.patch_size:
            raise ValueError("image size must be divisible by patch_size")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if self.embed_dim % 4:
            raise ValueError("embed_dim must be divisible by 4 (2-D sinusoidal encoding)")
        if self.layers < 1 or self.heads < 1 or self.mlp_ratio <= 0:
            raise ValueError("layers, heads >= 1 and mlp_ratio > 0 required")

    @property
    def n_rows(self) -> int:
        return self.image_height // self.patch_size

    @property
    def n_cols(self) -> int:
        return self.image_width // self.patch_size

    @property
    def n_patches(self) -> int:
        return self.n_rows * self.n_cols

    @property
    def mlp_hidden(self) -> int:
        return int(self.embed_dim * self.mlp_ratio)

    def to_dict(self) -> dict:
        return {
            "image_height": self.image_height,
            "image_width": self.image_width,
            "patch_size": self.patch_size,
            "embed_dim": self.embed_dim,
            "layers": self.layers,
            "heads": self.heads,
            "mlp_ratio": self.mlp_ratio,
            "include_cls": self.include_cls,
            "debug_disable_attention_mask": self.debug_disable_attention_mask,
        }


class PoolingMode(enum.Enum):
    MEAN = "mean"
    CLS = "cls"
    ATTENTION = "attention"
    DET = "det"


@dataclass(eq=False)
class EncoderState:
    """All learnable tensors as a flat named table, plus the init seed."""

    config: EncoderConfig
    seed: int
    params: dict[str, np.ndarray] = field(repr=False)


def init_encoder(config: EncoderConfig, seed: int = 0) -> EncoderState:
    rng = np.random.default_rng(seed)
    params: dict[str, np.ndarray] = {}
    patch_dim = config.patch_size * config.patch_size * CHANNELS
    params["patch_embed.weight"] = rng.normal(0.0, _nn.INIT_STD, (patch_dim, config.embed_dim))
    params["patch_embed.bias"] = np.zeros(config.embed_dim)
    if config.include_cls:
        params["cls_token"] = rng.normal(0.0, _nn.INIT_STD, config.embed_dim)
    for i in range(config.layers):
        _nn.init_block(rng, params, f"blocks.{i}.", config.embed_dim, config.mlp_hidden)
    params["pool_query"] = rng.normal(0.0, _nn.INIT_STD, config.embed_dim)
    return EncoderState(config=config, seed=seed, params=params)


# ---------------------------------------------------------------------------
# masks and flags
# ---------------------------------------------------------------------------

def mask_to_flags(
    mask: np.ndarray, config: EncoderConfig, min_coverage: float = 0.0
) -> np.ndarray:
    """Per-patch object flags: a patch is flagged when its pixel block's
    object fraction exceeds `min_coverage` (default: any overlapping pixel).
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (config.image_height, config.image_width):
        raise DimensionMismatch(
            f"mask shape {mask.shape} does not match image "
            f"({config.image_height}, {config.image_width})"
        )
    p = config.patch_size
    coverage = (
        mask.reshape(config.n_rows, p, config.n_cols, p)
        .mean(axis=(1, 3))
        .reshape(-1)
    )
    return coverage > min_coverage


def build_attention_mask(flags: np.ndarray, include_cls: bool) -> np.ndarray:
    """Allowed-pair matrix: attend(i -> j) iff flag[i] == flag[j].

    The CLS token, when present, is prepended and classed non-object, so
    object tokens never read it and the pooled embedding stays a function of
    object content alone.
    """
    flags = np.asarray(flags, dtype=bool)
    if not flags.any():
        raise EmptyObject("no object patch is flagged")
    if include_cls:
        flags = np.concatenate([[False], flags])
    return flags[:, None] == flags[None, :]


def _patchify(image: np.ndarray, config: EncoderConfig) -> np.ndarray:
    p = config.patch_size
    return (
        image.reshape(config.n_rows, p, config.n_cols, p, CHANNELS)
        .transpose(0, 2, 1, 3, 4)
        .reshape(config.n_patches, p * p * CHANNELS)
    )


def _unpatchify(dpatches: np.ndarray, config: EncoderConfig) -> np.ndarray:
    p = config.patch_size
    return (
        dpatches.reshape(config.n_rows, config.n_cols, p, p, CHANNELS)
        .transpose(0, 2, 1, 3, 4)
        .reshape(config.image_height, config.image_width, CHANNELS)
    )


def _check_inputs(image, state, mode, flags):
    config = state.config
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (config.image_height, config.image_width, CHANNELS):
        raise DimensionMismatch(f"image shape {image.shape} does not match config")
    if not np.isfinite(image).all():
        raise NonFiniteActivation("input image contains non-finite values")
    if mode is PoolingMode.CLS and not config.include_cls:
        raise ValueError("CLS pooling requires include_cls=True")
    if mode is PoolingMode.DET:
        if flags is None:
            raise EmptyObject("Det pooling requires patch flags")
        flags = np.asarray(flags, dtype=bool)
        if flags.shape != (config.n_patches,):
            raise DimensionMismatch(
                f"flags length {flags.shape} does not match {config.n_patches} patches"
            )
        if not flags.any():
            raise EmptyObject("Det pooling with no object patches")
    return image, flags


def _forward(image, state, mode, flags):
    """Full forward pass; returns (embedding, cache) for backward and probes."""
    config = state.config
    params = state.params
    image, flags = _check_inputs(image, state, mode, flags)

    patches = _patchify(image, config)
    tokens0, c_embed = _nn.linear_fwd(
        patches, params["patch_embed.weight"], params["patch_embed.bias"]
    )
    pe = _nn.sincos_2d(config.n_rows, config.n_cols, config.embed_dim)
    tokens = tokens0 + pe
    if config.include_cls:
        # CLS carries no spatial position, so no positional term is added.
        tokens = np.vstack([params["cls_token"], tokens])

    allowed = None
    if mode is PoolingMode.DET and not config.debug_disable_attention_mask:
        allowed = build_attention_mask(flags, config.include_cls)

    hidden, block_caches = _nn.transformer_fwd(
        tokens, params, config.layers, config.heads, allowed
    )
    offset = 1 if config.include_cls else 0
    patch_tokens = hidden[offset:]

    pool_cache = None
    if mode is PoolingMode.MEAN:
        embedding = patch_tokens.mean(axis=0)
    elif mode is PoolingMode.CLS:
        embedding = hidden[0]
    elif mode is PoolingMode.ATTENTION:
        scores = patch_tokens @ params["pool_query"]
        weights = _nn.masked_softmax(scores[None, :], None)[0]
        embedding = weights @ patch_tokens
        pool_cache = (weights, patch_tokens)
    else:
        embedding = patch_tokens[flags].mean(axis=0)

    if not np.isfinite(embedding).all():
        raise NonFiniteActivation("encoder produced non-finite values")
    cache = (config, flags, patches, c_embed, block_caches, hidden, pool_cache, mode)
    return embedding, cache


def encode(
    image: np.ndarray,
    state: EncoderState,
    mode: PoolingMode,
    flags: np.ndarray | None = None,
) -> np.ndarray:
    """Embed one image: patchify, add positional encoding, run the blocks,
    pool per `mode`. In Det mode every attention layer applies the flag mask.
    """
    embedding, _ = _forward(image, state, mode, flags)
    return embedding


def encode_grad(
    image: np.ndarray,
    state: EncoderState,
    mode: PoolingMode,
    flags: np.ndarray | None,
    upstream: np.ndarray,
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact gradients of <upstream, encode(...)> for every parameter and
    the input image.
    """
    upstream = np.asarray(upstream, dtype=np.float64)
    if upstream.shape != (state.config.embed_dim,):
        raise DimensionMismatch("upstream must match the embedding dimension")
    _, cache = _forward(image, state, mode, flags)
    config, flags, patches, c_embed, block_caches, hidden, pool_cache, mode = cache
    offset = 1 if config.include_cls else 0
    n_patches = config.n_patches

    grads = _nn.zero_grads(state.params)
    dhidden = np.zeros_like(hidden)
    if mode is PoolingMode.MEAN:
        dhidden[offset:] += upstream / n_patches
    elif mode is PoolingMode.CLS:
        dhidden[0] = upstream
    elif mode is PoolingMode.ATTENTION:
        weights, patch_tokens = pool_cache
        dweights = patch_tokens @ upstream
        dhidden[offset:] += np.outer(weights, upstream)
        dscores = _nn.softmax_bwd(dweights, weights)
        grads["pool_query"] += patch_tokens.T @ dscores
        dhidden[offset:] += np.outer(dscores, state.params["pool_query"])
    else:
        dhidden[offset:][flags] += upstream / int(flags.sum())

    dtokens = _nn.transformer_bwd(
        dhidden, block_caches, config.layers, config.heads, grads
    )
    if config.include_cls:
        grads["cls_token"] += dtokens[0]
        dtokens = dtokens[1:]
    dpatches, dw, db = _nn.linear_bwd(dtokens, c_embed)
    grads["patch_embed.weight"] += dw
    grads["patch_embed.bias"] += db
    return grads, _unpatchify(dpatches, config)


def attention_weights(
    image: np.ndarray,
    state: EncoderState,
    mode: PoolingMode,
    flags: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Per-layer attention matrices (heads, T, T); a verification probe."""
    _, cache = _forward(image, state, mode, flags)
    block_caches = cache[4]
    return [c_att[7] for (_, c_att, *_rest) in block_caches]


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def save_encoder_state(state: EncoderState, path) -> None:
    meta = {"kind": "encoder", "seed": state.seed, "config": state.config.to_dict()}
    save_tensors(path, state.params, meta)


def load_encoder_state(path) -> EncoderState:
    tensors, meta = load_tensors(path)
    if meta.get("kind") != "encoder":
        raise SchemaViolation(f"blob is not an encoder state: kind={meta.get('kind')!r}")
    config = EncoderConfig(**meta["config"])
    return EncoderState(config=config, seed=meta["seed"], params=tensors)
