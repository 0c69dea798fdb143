"""Low-rank compression of linear layers and the prune-then-factor model pipeline."""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .decomp import (
    FullRank,
    choose_rank,
    lu,
    policy_str,
    qr_pivoted,
    svd,
    svd_truncate,
)
from .errors import MethodUnsupported
from .matcore import frobenius_norm
from .prune_model import prune_model
from .vit import Dense, Factored, flop_count, param_count

METHODS = ("svd", "qrp", "lu")


@dataclass
class LayerReport:
    name: str
    shape_before: list
    shape_after: list
    rank: object  # int, or None when the layer stays dense
    params_before: int
    params_after: int
    flops_before: int
    flops_after: int
    rel_err: float


@dataclass
class CompressionReport:
    model_name: str
    rate: float
    method: str
    policy: str
    layers: list = field(default_factory=list)
    totals: dict = field(default_factory=dict)
    tool_version: str = __version__

    def finalize(self):
        keys = ("params_before", "params_after", "flops_before", "flops_after")
        self.totals = {k: sum(getattr(l, k) for l in self.layers) for k in keys}
        return self

    def to_dict(self):
        d = asdict(self)
        d["totals"] = dict(self.totals)
        return d


def factor_weight(W, method, policy):
    """Factor a dense weight. Returns (left, scale or None, right)."""
    if method == "svd":
        f = svd_truncate(svd(W), policy)
        return f.U, f.sigma, np.ascontiguousarray(f.V.T)
    if method == "qrp":
        pq = qr_pivoted(W, rank_tol=0.0)
        T = pq.T
        k = choose_rank(np.einsum("ij,ij->i", T, T), policy)
        right = np.empty((k, W.shape[1]))
        right[:, pq.perm] = T[:k]
        return np.ascontiguousarray(pq.Q[:, :k]), None, right
    if method == "lu":
        if W.shape[0] != W.shape[1]:
            raise MethodUnsupported(f"LU compression needs a square weight, got {W.shape}")
        f = lu(W, allow_singular=True)
        k = choose_rank(np.einsum("ij,ij->i", f.U, f.U), policy)
        left = np.empty((W.shape[0], k))
        left[f.perm] = f.L[:, :k]
        return left, None, np.ascontiguousarray(f.U[:k])
    raise MethodUnsupported(f"unknown compression method {method!r}")


def compress_layer(layer, method, policy, tokens=1, name="", original=None):
    """Replace a Dense layer by its factored approximation.

    ``original`` (the layer before pruning, if any) only feeds the *_before
    columns of the report.
    """
    if not isinstance(layer, Dense):
        raise TypeError("compress_layer needs a Dense layer")
    left, scale, right = factor_weight(layer.W, method, policy)
    new = Factored(left, right, layer.b, scale)
    ref = layer if original is None else original
    W = layer.W
    nw = frobenius_norm(W)
    err = frobenius_norm(W - new.weight())
    rep = LayerReport(
        name=name,
        shape_before=[ref.in_dim, ref.out_dim],
        shape_after=[new.in_dim, new.out_dim],
        rank=new.rank,
        params_before=param_count(ref),
        params_after=param_count(new),
        flops_before=flop_count(ref, tokens),
        flops_after=flop_count(new, tokens),
        rel_err=err / nw if nw > 0 else err,
    )
    return new, rep


def _dense_row(name, layer, original, tokens):
    return LayerReport(
        name=name,
        shape_before=[original.in_dim, original.out_dim],
        shape_after=[layer.in_dim, layer.out_dim],
        rank=None,
        params_before=param_count(original),
        params_after=param_count(layer),
        flops_before=flop_count(original, tokens),
        flops_after=flop_count(layer, tokens),
        rel_err=0.0,
    )


def prune_report(model, pruned, rate, model_name=""):
    tokens = model.config.tokens
    orig = dict(model.named_linears())
    rep = CompressionReport(model_name, float(rate), "none", "none")
    rep.layers = [_dense_row(n, l, orig[n], tokens) for n, l in pruned.named_linears()]
    return rep.finalize()


def compress_model(model, scores, rate, method, policy=FullRank(), scope="per-layer",
                   model_name="", jobs=1):
    """Prune every MHSA/MLP site, then factor every remaining dense block projection.

    LU only applies to square weights; rectangular ones are left dense (rank None
    in the report). Returns (model, CompressionReport).
    """
    if method not in METHODS:
        raise MethodUnsupported(f"unknown compression method {method!r}")
    pruned, _ = prune_model(model, scores, rate, scope)
    tokens = model.config.tokens
    orig = dict(model.named_linears())
    items = pruned.named_linears()

    def work(item):
        name, layer = item
        if not isinstance(layer, Dense) or (method == "lu" and layer.in_dim != layer.out_dim):
            return layer, _dense_row(name, layer, orig[name], tokens)
        return compress_layer(layer, method, policy, tokens, name, orig[name])

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(work, items))
    else:
        results = [work(it) for it in items]
    new_layers = {name: lay for (name, _), (lay, _) in zip(items, results)}
    rep = CompressionReport(model_name, float(rate), method, policy_str(policy),
                            [r for _, r in results])
    return pruned.with_block_layers(new_layers), rep.finalize()
