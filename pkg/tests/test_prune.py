import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vtpmd import prune
from vtpmd.errors import (
    DimensionMismatch,
    EmptyScores,
    InconsistentThreshold,
    ShapeInconsistency,
)
from vtpmd.prune_model import prune_model, site_dims, site_names
from vtpmd.vit import forward

RATES = [i / 10 for i in range(10)]


def oracle_keep(d, rate):
    # exact rational arithmetic: rate is a decimal with one digit
    r = Fraction(rate).limit_denominator(1000)
    return max(1, math.ceil((1 - r) * d))


def oracle_mask(scores, rate):
    """Sort (-|a|, index) pairs by hand; first `keep` are kept."""
    d = len(scores)
    keep = oracle_keep(d, rate)
    pairs = sorted((-abs(float(s)), i) for i, s in enumerate(scores))
    mask = [False] * d
    for _, i in pairs[:keep]:
        mask[i] = True
    return mask, -pairs[keep - 1][0]


def tie_scores(rng, d):
    # draw from a small value set so that ties are frequent
    vals = rng.choice([-0.3, 0.1, 0.3, 0.5, 0.9, -0.9], size=d)
    if rng.random() < 0.5:
        vals = rng.standard_normal(d)
    return vals


def test_threshold_examples():
    assert prune.threshold_from_rate([0.9, 0.1, 0.5, 0.7], 0.5) == 0.7
    assert prune.threshold_from_rate([0.4, -0.2, 0.8], 0.0) == 0.2
    m = prune.mask_from_rate([0.3, 0.3, 0.3], 0.5)
    assert m.mask.tolist() == [True, True, False] and m.kept == 2


def test_binarize_examples():
    m = prune.binarize([0.9, 0.1, 0.5, 0.7], 0.7, 2)
    assert m.mask.tolist() == [True, False, False, True] and m.tau == 0.7
    assert prune.binarize([0.2, 0.5, 0.1], 0.1, 3).mask.all()
    assert prune.binarize([0.3, 0.3, 0.3], 0.3, 2).mask.tolist() == [True, True, False]


def test_binarize_inconsistent():
    with pytest.raises(InconsistentThreshold):
        prune.binarize([0.9, 0.1, 0.5, 0.7], 0.5, 1)
    with pytest.raises(InconsistentThreshold):
        prune.binarize([0.9, 0.1, 0.5, 0.7], 0.95, 1)


def test_errors():
    with pytest.raises(EmptyScores):
        prune.threshold_from_rate([], 0.5)
    with pytest.raises(ValueError):
        prune.threshold_from_rate([1.0], 1.0)
    with pytest.raises(ValueError):
        prune.threshold_from_rate([1.0], -0.1)


def test_keep_count_matches_exact_ceil():
    for d in range(1, 200):
        for r in RATES:
            assert prune.keep_count(d, r) == oracle_keep(d, r), (d, r)


def test_oracle_equivalence_random(rng):
    for _ in range(300):
        d = int(rng.integers(1, 11))
        s = tie_scores(rng, d)
        for r in RATES:
            m = prune.mask_from_rate(s, r)
            om, otau = oracle_mask(s, r)
            assert m.mask.tolist() == om and m.tau == otau


def test_oracle_equivalence_exhaustive_ties():
    # every pattern over a 3-value alphabet, d <= 6
    for d in range(1, 7):
        for pat in itertools.product([0.1, 0.5, -0.5], repeat=d):
            for r in (0.0, 0.3, 0.5, 0.9):
                m = prune.mask_from_rate(pat, r)
                om, otau = oracle_mask(pat, r)
                assert m.mask.tolist() == om and m.tau == otau


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=20),
       st.sampled_from(RATES))
def test_mask_invariants(scores, rate):
    m = prune.mask_from_rate(scores, rate)
    mag = np.abs(np.asarray(scores))
    assert m.kept == oracle_keep(len(scores), rate)
    assert (mag[m.mask] >= m.tau).all() and (mag[~m.mask] <= m.tau).all()


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=15),
       st.floats(1e-3, 1e3))
def test_scale_invariance(scores, c):
    s = np.asarray(scores)
    # scaling can merge distinct magnitudes through rounding, so only exact
    # power-of-two factors are guaranteed to keep the order intact
    c2 = 2.0 ** round(math.log2(c))
    for r in RATES:
        assert (prune.mask_from_rate(s, r).mask == prune.mask_from_rate(c2 * s, r).mask).all()


def test_scale_invariance_generic(rng):
    for _ in range(200):
        s = rng.standard_normal(int(rng.integers(1, 20)))
        c = float(np.exp(rng.uniform(-5, 5)))
        for r in RATES:
            assert (prune.mask_from_rate(s, r).mask == prune.mask_from_rate(c * s, r).mask).all()


def test_monotone_in_rate(rng):
    for _ in range(100):
        s = tie_scores(rng, int(rng.integers(1, 15)))
        kept = [prune.mask_from_rate(s, r).kept for r in RATES]
        assert all(a >= b for a, b in zip(kept, kept[1:]))


def test_apply_mask_examples(rng):
    X = np.arange(6.0).reshape(2, 3)
    assert prune.apply_mask(X, np.array([1, 0, 1], bool)).tolist() == [[0.0, 2.0], [3.0, 5.0]]
    Y = rng.standard_normal((3, 4))
    same = prune.apply_mask(Y, np.ones(4, bool))
    assert same.tobytes() == Y.tobytes()
    with pytest.raises(DimensionMismatch):
        prune.apply_mask(X, np.ones(4, bool))


def test_apply_mask_diag_oracle(rng):
    for _ in range(50):
        X = rng.standard_normal((4, 6))
        m = prune.mask_from_rate(rng.standard_normal(6), 0.5)
        a = m.mask.astype(float)
        D = np.zeros((6, 6))
        for i in range(6):
            D[i, i] = a[i]
        full = np.array([[sum(X[r, k] * D[k, c] for k in range(6)) for c in range(6)] for r in range(4)])
        expect = full[:, [c for c in range(6) if a[c] != 0]]
        assert prune.apply_mask(X, m).tobytes() == expect.tobytes()


def test_global_tiny_layer_prunes_more(rng):
    scores = {"a": rng.uniform(0.5, 1.0, 8), "b": np.full(8, 1e-6), "c": rng.uniform(0.5, 1.0, 8)}
    masks = prune.global_masks(scores, 0.5)
    total = sum(m.kept for m in masks.values())
    assert total == oracle_keep(24, 0.5)
    assert masks["b"].kept == 1  # floor of one
    assert masks["a"].kept > 4 or masks["c"].kept > 4


def test_global_matches_brute_force_without_floor(rng):
    for _ in range(200):
        sizes = rng.integers(1, 6, size=3)
        vecs = {f"l{i}": tie_scores(rng, int(n)) for i, n in enumerate(sizes)}
        allv = np.concatenate(list(vecs.values()))
        r = RATES[int(rng.integers(len(RATES)))]
        om, _ = oracle_mask(allv, r)
        masks = prune.global_masks(vecs, r)
        got = np.concatenate([m.mask for m in masks.values()])
        # the one-per-layer floor wins when layers outnumber the global keep count
        assert got.sum() == max(sum(om), len(vecs))
        lo = 0
        hits_floor = False
        for v in vecs.values():
            if not any(om[lo:lo + len(v)]):
                hits_floor = True
            lo += len(v)
        if not hits_floor:
            assert got.tolist() == om
        for m in masks.values():
            assert m.kept >= 1


def test_prune_model_rate_zero(tiny_model):
    pruned, masks = prune_model(tiny_model, None, 0.0)
    assert all(m.mask.all() for m in masks.values())
    for b0, b1 in zip(tiny_model.blocks, pruned.blocks):
        for k in b0.LINEARS:
            assert getattr(b0, k).weight().shape == getattr(b1, k).weight().shape
        assert b1.attn_keep is None


def test_prune_model_per_layer_halves(tiny_model, rng):
    scores = {k: rng.standard_normal(d) for k, d in site_dims(tiny_model).items()}
    pruned, masks = prune_model(tiny_model, scores, 0.5)
    dims = site_dims(pruned)
    for k, d in site_dims(tiny_model).items():
        assert dims[k] == math.ceil(d / 2) == masks[k].kept
    c = tiny_model.config
    x = rng.random((c.channels, c.image_size, c.image_size))
    assert forward(pruned, x).shape == (c.classes,)


def test_prune_model_matches_gated_model(tiny_model, rng):
    # pruning must equal zeroing the dropped features inside the dense model
    scores = {k: rng.standard_normal(d) for k, d in site_dims(tiny_model).items()}
    pruned, masks = prune_model(tiny_model, scores, 0.5)
    from dataclasses import replace
    from vtpmd.vit import Dense
    blocks = []
    for i, b in enumerate(tiny_model.blocks):
        am = masks[f"block{i}.attn"].mask.astype(float)[:, None]
        mm = masks[f"block{i}.mlp"].mask.astype(float)
        blocks.append(replace(
            b,
            wq=Dense(b.wq.W * am, b.wq.b), wk=Dense(b.wk.W * am, b.wk.b), wv=Dense(b.wv.W * am, b.wv.b),
            mlp1=Dense(b.mlp1.W * mm, b.mlp1.b * mm),
        ))
    gated = replace(tiny_model, blocks=tuple(blocks))
    c = tiny_model.config
    x = rng.random((4, c.channels, c.image_size, c.image_size))
    assert np.allclose(forward(pruned, x), forward(gated, x), rtol=0, atol=1e-12)


def test_prune_model_global(tiny_model, rng):
    dims = site_dims(tiny_model)
    scores = {k: rng.uniform(0.5, 1, d) for k, d in dims.items()}
    scores["block1.mlp"] = np.full(dims["block1.mlp"], 1e-8)
    _, masks = prune_model(tiny_model, scores, 0.5, scope="global")
    assert sum(m.kept for m in masks.values()) == oracle_keep(sum(dims.values()), 0.5)
    assert masks["block1.mlp"].kept == 1


def test_prune_model_errors(tiny_model):
    dims = site_dims(tiny_model)
    scores = {k: np.ones(d) for k, d in dims.items()}
    with pytest.raises(ShapeInconsistency):
        prune_model(tiny_model, {**scores, "residual": np.ones(16)}, 0.5)
    del scores[site_names(tiny_model)[0]]
    with pytest.raises(ShapeInconsistency):
        prune_model(tiny_model, scores, 0.5)
    bad = {k: np.ones(d + 1) for k, d in dims.items()}
    with pytest.raises(DimensionMismatch):
        prune_model(tiny_model, bad, 0.5)


def test_prune_twice_composes(tiny_model, rng):
    s1 = {k: rng.standard_normal(d) for k, d in site_dims(tiny_model).items()}
    p1, _ = prune_model(tiny_model, s1, 0.25)
    s2 = {k: rng.standard_normal(d) for k, d in site_dims(p1).items()}
    p2, m2 = prune_model(p1, s2, 0.5)
    for i, b in enumerate(p2.blocks):
        assert len(b.attn_keep) == m2[f"block{i}.attn"].kept == b.wq.in_dim
        assert len(set(b.attn_keep.tolist())) == len(b.attn_keep)
