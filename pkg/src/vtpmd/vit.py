"""A small pre-norm Vision Transformer forward engine with dense or factored linear
layers, plus parameter and FLOP accounting.

Linear layers act on row vectors, ``Y = X @ W + b``, so a weight has shape
(in_features, out_features). Every function accepts activations with leading batch
axes, ``(..., tokens, features)``.
"""
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .errors import DimensionMismatch, RankTooSmall
from .matcore import (
    LN_EPS,
    as_matrix,
    as_vector,
    gelu,
    layer_norm_lastaxis,
    softmax_lastaxis,
)


@dataclass(frozen=True)
class TransformerConfig:
    image_size: int = 32
    patch_size: int = 8
    layers: int = 2
    heads: int = 2
    embed_dim: int = 16
    mlp_ratio: float = 2.0
    classes: int = 10
    channels: int = 3
    class_token: bool = True

    def __post_init__(self):
        for f in ("image_size", "patch_size", "layers", "heads", "embed_dim", "classes", "channels"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")
        if self.image_size % self.patch_size:
            raise ValueError("image_size must be divisible by patch_size")
        if self.embed_dim % self.heads:
            raise ValueError("embed_dim must be divisible by heads")
        if self.mlp_ratio <= 0:
            raise ValueError("mlp_ratio must be positive")

    @property
    def num_patches(self):
        return (self.image_size // self.patch_size) ** 2

    @property
    def tokens(self):
        return self.num_patches + (1 if self.class_token else 0)

    @property
    def patch_dim(self):
        return self.channels * self.patch_size ** 2

    @property
    def mlp_hidden(self):
        return int(round(self.embed_dim * self.mlp_ratio))


PRESETS = {
    "tiny": TransformerConfig(),
    # full-scale: 12 layers, 768 wide (12 heads so the width splits evenly)
    "vit-p2": TransformerConfig(patch_size=2, layers=12, heads=12, embed_dim=768, mlp_ratio=4.0),
    "vit-p4": TransformerConfig(patch_size=4, layers=12, heads=12, embed_dim=768, mlp_ratio=4.0),
    "vit-p8": TransformerConfig(patch_size=8, layers=12, heads=12, embed_dim=768, mlp_ratio=4.0),
}


# linear layers ---------------------------------------------------------------

@dataclass(frozen=True)
class Dense:
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "W", as_matrix(self.W, "W"))
        object.__setattr__(self, "b", as_vector(self.b, "b"))
        if self.b.shape[0] != self.W.shape[1]:
            raise DimensionMismatch(f"bias {self.b.shape} vs W {self.W.shape}")

    @property
    def in_dim(self):
        return self.W.shape[0]

    @property
    def out_dim(self):
        return self.W.shape[1]

    def weight(self):
        return self.W


@dataclass(frozen=True)
class Factored:
    """Effective weight ``left @ diag(scale) @ right``; never formed during apply."""
    left: np.ndarray
    right: np.ndarray
    b: np.ndarray
    scale: Optional[np.ndarray] = None

    def __post_init__(self):
        if np.ndim(self.left) == 2 and np.shape(self.left)[1] < 1:
            raise RankTooSmall("factored rank must be >= 1")
        object.__setattr__(self, "left", as_matrix(self.left, "left"))
        object.__setattr__(self, "right", as_matrix(self.right, "right"))
        object.__setattr__(self, "b", as_vector(self.b, "b"))
        k = self.left.shape[1]
        if self.right.shape[0] != k:
            raise DimensionMismatch(f"left {self.left.shape} vs right {self.right.shape}")
        if self.scale is not None:
            object.__setattr__(self, "scale", as_vector(self.scale, "scale"))
            if self.scale.shape[0] != k:
                raise DimensionMismatch(f"scale has {self.scale.shape[0]} entries, rank is {k}")
        if self.b.shape[0] != self.right.shape[1]:
            raise DimensionMismatch(f"bias {self.b.shape} vs right {self.right.shape}")

    @property
    def rank(self):
        return self.left.shape[1]

    @property
    def in_dim(self):
        return self.left.shape[0]

    @property
    def out_dim(self):
        return self.right.shape[1]

    def weight(self):
        L = self.left if self.scale is None else self.left * self.scale
        return L @ self.right

    def two_factor(self):
        """Same layer with ``scale`` folded into ``left``."""
        if self.scale is None:
            return self
        return Factored(self.left * self.scale, self.right, self.b)


def linear_apply(layer, X):
    X = np.asarray(X, dtype=np.float64)
    if X.shape[-1] != layer.in_dim:
        raise DimensionMismatch(f"input has {X.shape[-1]} features, layer expects {layer.in_dim}")
    if isinstance(layer, Dense):
        return X @ layer.W + layer.b
    H = X @ layer.left
    if layer.scale is not None:
        H = H * layer.scale
    return H @ layer.right + layer.b


def param_count(layer):
    m, n = layer.in_dim, layer.out_dim
    if isinstance(layer, Dense):
        return m * n + n
    k = layer.rank
    # the k scale slots are counted whether or not they are stored
    return k * (m + n) + k + n


def flop_count(layer, tokens):
    m, n = layer.in_dim, layer.out_dim
    if isinstance(layer, Dense):
        return 2 * tokens * m * n
    k = layer.rank
    return 2 * tokens * k * (m + n) + tokens * k


# model -----------------------------------------------------------------------

@dataclass(frozen=True)
class Norm:
    g: np.ndarray
    b: np.ndarray


@dataclass(frozen=True)
class EncoderBlock:
    wq: object
    wk: object
    wv: object
    wo: object
    mlp1: object
    mlp2: object
    norm1: Norm
    norm2: Norm
    # indices of the normalized features fed to wq/wk/wv; None means all of them
    attn_keep: Optional[np.ndarray] = None

    LINEARS = ("wq", "wk", "wv", "wo", "mlp1", "mlp2")

    def linears(self):
        return {k: getattr(self, k) for k in self.LINEARS}

    def check(self, embed_dim, heads):
        qkv_in = embed_dim if self.attn_keep is None else len(self.attn_keep)
        for k in ("wq", "wk", "wv"):
            lay = getattr(self, k)
            if lay.in_dim != qkv_in:
                raise DimensionMismatch(f"{k} expects {lay.in_dim} inputs, attention input has {qkv_in}")
        if not (self.wq.out_dim == self.wk.out_dim == self.wv.out_dim):
            raise DimensionMismatch("q/k/v output widths differ")
        if self.wq.out_dim % heads:
            raise DimensionMismatch("attention width not divisible by heads")
        if self.wo.in_dim != self.wv.out_dim or self.wo.out_dim != embed_dim:
            raise DimensionMismatch("wo shape inconsistent")
        if self.mlp1.in_dim != embed_dim or self.mlp2.out_dim != embed_dim:
            raise DimensionMismatch("mlp input/output must match embed_dim")
        if self.mlp1.out_dim != self.mlp2.in_dim:
            raise DimensionMismatch("mlp hidden widths differ")


@dataclass(frozen=True)
class TransformerModel:
    config: TransformerConfig
    patch_embed: object
    pos_embed: np.ndarray
    blocks: tuple
    norm: Norm
    head: object
    cls: Optional[np.ndarray] = None

    def __post_init__(self):
        c = self.config
        if len(self.blocks) != c.layers:
            raise DimensionMismatch(f"{len(self.blocks)} blocks for a {c.layers}-layer config")
        if self.pos_embed.shape != (c.tokens, c.embed_dim):
            raise DimensionMismatch(f"pos_embed {self.pos_embed.shape}, expected {(c.tokens, c.embed_dim)}")
        if self.patch_embed.in_dim != c.patch_dim or self.patch_embed.out_dim != c.embed_dim:
            raise DimensionMismatch("patch_embed shape inconsistent with config")
        if self.head.in_dim != c.embed_dim or self.head.out_dim != c.classes:
            raise DimensionMismatch("head shape inconsistent with config")
        if c.class_token and (self.cls is None or self.cls.shape != (c.embed_dim,)):
            raise DimensionMismatch("class token missing or misshaped")
        for blk in self.blocks:
            blk.check(c.embed_dim, c.heads)

    def named_linears(self):
        """(name, layer) for every block projection, in a fixed order."""
        out = []
        for i, blk in enumerate(self.blocks):
            for k in EncoderBlock.LINEARS:
                out.append((f"block{i}.{k}", getattr(blk, k)))
        return out

    def with_block_layers(self, layers):
        """Copy with block projections replaced from a {"block<i>.<name>": layer} map."""
        blocks = []
        for i, blk in enumerate(self.blocks):
            upd = {k: layers[f"block{i}.{k}"] for k in EncoderBlock.LINEARS if f"block{i}.{k}" in layers}
            blocks.append(replace(blk, **upd))
        return replace(self, blocks=tuple(blocks))


def init_model(config, rng):
    """Random model; weights ~ N(0, 1/fan_in), biases and embeddings small."""
    c = config
    d = c.embed_dim
    h = c.mlp_hidden

    def dense(m, n):
        return Dense(rng.standard_normal((m, n)) / math.sqrt(m), 0.02 * rng.standard_normal(n))

    def norm():
        return Norm(1.0 + 0.1 * rng.standard_normal(d), 0.1 * rng.standard_normal(d))

    blocks = []
    for _ in range(c.layers):
        blocks.append(EncoderBlock(
            wq=dense(d, d), wk=dense(d, d), wv=dense(d, d), wo=dense(d, d),
            mlp1=dense(d, h), mlp2=dense(h, d), norm1=norm(), norm2=norm()))
    return TransformerModel(
        config=c,
        patch_embed=dense(c.patch_dim, d),
        pos_embed=0.1 * rng.standard_normal((c.tokens, d)),
        blocks=tuple(blocks),
        norm=norm(),
        head=dense(d, c.classes),
        cls=0.1 * rng.standard_normal(d) if c.class_token else None,
    )


# forward ---------------------------------------------------------------------

def attention(Q, K, V, d_head):
    """softmax(Q K^T / sqrt(d_head)) V over the last two axes."""
    Q = np.asarray(Q, dtype=np.float64)
    K = np.asarray(K, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    if not (Q.shape[-2] == K.shape[-2] == V.shape[-2]):
        raise DimensionMismatch("Q, K, V token counts differ")
    if Q.shape[-1] != d_head or K.shape[-1] != d_head:
        raise DimensionMismatch(f"Q/K width must equal d_head={d_head}")
    return attention_weights(Q, K, d_head) @ V


def attention_weights(Q, K, d_head):
    return softmax_lastaxis(Q @ np.swapaxes(K, -1, -2) / math.sqrt(d_head))


def mhsa(X, block, heads):
    X = np.asarray(X, dtype=np.float64)
    if block.attn_keep is not None:
        X = X[..., block.attn_keep]
    Q = linear_apply(block.wq, X)
    K = linear_apply(block.wk, X)
    V = linear_apply(block.wv, X)
    width = Q.shape[-1]
    dh = width // heads
    outs = [attention(Q[..., h * dh:(h + 1) * dh], K[..., h * dh:(h + 1) * dh],
                      V[..., h * dh:(h + 1) * dh], dh) for h in range(heads)]
    return linear_apply(block.wo, np.concatenate(outs, axis=-1))


def mlp(X, block):
    return linear_apply(block.mlp2, gelu(linear_apply(block.mlp1, X)))


def encoder_block(X, block, heads):
    Y = X + mhsa(layer_norm_lastaxis(X, block.norm1.g, block.norm1.b, LN_EPS), block, heads)
    return Y + mlp(layer_norm_lastaxis(Y, block.norm2.g, block.norm2.b, LN_EPS), block)


def patchify(images, config):
    """(..., C*H*W) or (..., C, H, W) channel-major images -> (..., patches, C*p*p)."""
    c = config
    x = np.asarray(images, dtype=np.float64)
    chw = (c.channels, c.image_size, c.image_size)
    if x.shape[-3:] != chw and x.shape[-1] == c.channels * c.image_size ** 2:
        x = x.reshape(x.shape[:-1] + chw)
    if x.shape[-3:] != chw:
        raise DimensionMismatch(
            f"image shape {x.shape} does not match {c.channels}x{c.image_size}x{c.image_size}")
    lead = x.shape[:-3]
    g = c.image_size // c.patch_size
    p = c.patch_size
    x = x.reshape(lead + (c.channels, g, p, g, p))
    # -> (..., gi, gj, C, pi, pj)
    nd = len(lead)
    x = x.transpose(tuple(range(nd)) + (nd + 1, nd + 3, nd, nd + 2, nd + 4))
    return x.reshape(lead + (g * g, c.channels * p * p))


def embed(model, images):
    c = model.config
    tok = linear_apply(model.patch_embed, patchify(images, c))
    if c.class_token:
        cls = np.broadcast_to(model.cls, tok.shape[:-2] + (1, c.embed_dim))
        tok = np.concatenate([cls, tok], axis=-2)
    return tok + model.pos_embed


def forward(model, images):
    """Logits for one image (-> (classes,)) or a batch (-> (B, classes))."""
    X = embed(model, images)
    for blk in model.blocks:
        X = encoder_block(X, blk, model.config.heads)
    X = layer_norm_lastaxis(X, model.norm.g, model.norm.b, LN_EPS)
    pooled = X[..., 0, :] if model.config.class_token else X.mean(axis=-2)
    return linear_apply(model.head, pooled)


def block_param_count(model):
    return sum(param_count(l) for _, l in model.named_linears())
