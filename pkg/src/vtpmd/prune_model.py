"""Pruning applied to a whole model.

Two sites per encoder block are prunable:

``block<i>.attn``
    the normalized features fed to wq/wk/wv (length embed_dim). Pruned features
    are dropped after norm1; the residual stream itself keeps its full width.
``block<i>.mlp``
    the MLP hidden units (length mlp hidden). Columns of mlp1 (and its bias) and
    the matching rows of mlp2 are removed together.
"""
from dataclasses import replace

import numpy as np

from .errors import DimensionMismatch, ShapeInconsistency
from .prune import PruneMask, global_masks, mask_from_rate
from .vit import Dense, Factored


def site_names(model):
    out = []
    for i in range(len(model.blocks)):
        out += [f"block{i}.attn", f"block{i}.mlp"]
    return out


def site_dims(model):
    dims = {}
    for i, blk in enumerate(model.blocks):
        dims[f"block{i}.attn"] = blk.wq.in_dim
        dims[f"block{i}.mlp"] = blk.mlp1.out_dim
    return dims


def _rows(layer, idx):
    if isinstance(layer, Dense):
        return Dense(layer.W[idx], layer.b)
    if isinstance(layer, Factored):
        return Factored(layer.left[idx], layer.right, layer.b, layer.scale)
    raise TypeError(type(layer))


def _cols(layer, idx):
    if isinstance(layer, Dense):
        return Dense(layer.W[:, idx], layer.b[idx])
    if isinstance(layer, Factored):
        return Factored(layer.left, layer.right[:, idx], layer.b[idx], layer.scale)
    raise TypeError(type(layer))


def prune_model(model, scores, rate, scope="per-layer"):
    """Prune every site by its importance scores.

    ``scores`` maps site name (see :func:`site_names`) to a score vector. Returns
    ``(pruned_model, {site: PruneMask})``. With rate 0 the model comes back with
    unchanged shapes and all-ones masks.
    """
    dims = site_dims(model)
    if rate == 0 and scores is None:
        scores = {k: np.ones(d) for k, d in dims.items()}
    missing = [k for k in dims if k not in scores]
    if missing:
        raise ShapeInconsistency(f"no scores for site(s) {missing}")
    extra = [k for k in scores if k not in dims]
    if extra:
        # anything else would cut the residual stream
        raise ShapeInconsistency(f"site(s) {extra} are not prunable; residual width must stay intact")
    vecs = {}
    for k, d in dims.items():
        v = np.asarray(getattr(scores[k], "a", scores[k]), dtype=np.float64).ravel()
        if v.shape[0] != d:
            raise DimensionMismatch(f"scores for {k} have length {v.shape[0]}, site width is {d}")
        vecs[k] = v
    if scope == "global":
        masks = global_masks(vecs, rate)
    elif scope == "per-layer":
        masks = {k: mask_from_rate(v, rate) for k, v in vecs.items()}
    else:
        raise ValueError(f"unknown pruning scope {scope!r}")

    blocks = []
    for i, blk in enumerate(model.blocks):
        am = masks[f"block{i}.attn"]
        mm = masks[f"block{i}.mlp"]
        a_idx = am.indices
        h_idx = mm.indices
        base = np.arange(model.config.embed_dim) if blk.attn_keep is None else blk.attn_keep
        blocks.append(replace(
            blk,
            wq=_rows(blk.wq, a_idx), wk=_rows(blk.wk, a_idx), wv=_rows(blk.wv, a_idx),
            attn_keep=None if blk.attn_keep is None and am.kept == len(base) else base[a_idx],
            mlp1=_cols(blk.mlp1, h_idx), mlp2=_rows(blk.mlp2, h_idx),
        ))
    return replace(model, blocks=tuple(blocks)), masks


def all_ones(model):
    return {k: PruneMask(np.ones(d, dtype=bool), 0.0) for k, d in site_dims(model).items()}
