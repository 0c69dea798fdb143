from dataclasses import replace

import numpy as np
import pytest

from vtpmd import pipeline
from vtpmd.cifar import Cifar10Batch
from vtpmd.errors import DimensionMismatch
from vtpmd.prune_model import site_dims
from vtpmd.vit import Dense, TransformerConfig, forward, init_model


def batch(rng, n):
    return Cifar10Batch(rng.integers(0, 10, n).astype(np.uint8),
                        rng.integers(0, 256, (n, 3072)).astype(np.uint8))


def constant_class(model, cls):
    b = np.zeros(model.config.classes)
    b[cls] = 1.0
    return replace(model, head=Dense(np.zeros_like(model.head.W), b))


def test_constant_model_counts_labels(tiny_model, rng):
    data = batch(rng, 300)
    for limit in (1, 17, 300, 5000):
        n = min(limit, 300)
        res = pipeline.evaluate(constant_class(tiny_model, 0), data, limit, chunk=64)
        assert res["n"] == n
        assert res["accuracy"] == np.count_nonzero(data.labels[:n] == 0) / n


def test_limit_one(tiny_model, rng):
    assert pipeline.evaluate(tiny_model, batch(rng, 5), 1)["accuracy"] in (0.0, 1.0)


def test_evaluate_matches_direct_argmax(tiny_model, rng):
    data = batch(rng, 40)
    x = (data.pixels.astype(float) / 255.0 - 0.5) / 0.5
    pred = np.argmax(forward(tiny_model, x), axis=1)
    res = pipeline.evaluate(tiny_model, data, 40, chunk=7)
    assert res["accuracy"] == np.mean(pred == data.labels)


def test_evaluate_deterministic_and_jobs(tiny_model, rng):
    data = batch(rng, 90)
    a = pipeline.evaluate(tiny_model, data, 90, chunk=10)
    assert a == pipeline.evaluate(tiny_model, data, 90, chunk=10)
    assert a == pipeline.evaluate(tiny_model, data, 90, chunk=10, jobs=4)


def test_evaluate_errors(rng):
    m = init_model(TransformerConfig(image_size=16, patch_size=8), rng)
    with pytest.raises(DimensionMismatch):
        pipeline.evaluate(m, batch(rng, 2), 2)
    with pytest.raises(ValueError):
        pipeline.evaluate(init_model(TransformerConfig(), rng), batch(rng, 2), 0)


def test_normalize(rng):
    x = rng.random((2, 3072))
    y = pipeline.normalize(x, (0.1, 0.2, 0.3), (1.0, 2.0, 4.0))
    assert np.allclose(y[:, :1024], x[:, :1024] - 0.1)
    assert np.allclose(y[:, 2048:], (x[:, 2048:] - 0.3) / 4.0)


def test_seed_from_env(monkeypatch):
    monkeypatch.delenv("VTPMD_SEED", raising=False)
    assert pipeline.seed_from_env() == 0
    monkeypatch.setenv("VTPMD_SEED", "42")
    assert pipeline.seed_from_env() == 42


def test_rng_streams_independent():
    a = pipeline.rng_for(1, 0).random(4)
    assert np.array_equal(a, pipeline.rng_for(1, 0).random(4))
    assert not np.array_equal(a, pipeline.rng_for(1, 1).random(4))
    assert not np.array_equal(a, pipeline.rng_for(2, 0).random(4))


def test_fit_model_scores(tiny_model):
    s1 = pipeline.fit_model_scores(tiny_model, 1e-2, 30, seed=3)
    s2 = pipeline.fit_model_scores(tiny_model, 1e-2, 30, seed=3)
    dims = site_dims(tiny_model)
    assert list(s1) == list(dims)
    for k, d in dims.items():
        assert s1[k].a.shape == (d,) and s1[k].layer_id == k
        assert s1[k].a.tobytes() == s2[k].a.tobytes()


def test_fit_uses_supplied_calibration(tiny_model, rng):
    X = rng.standard_normal((20, 16))
    s_cal = pipeline.fit_model_scores(tiny_model, 1e-1, 30, {"block0.attn": X}, seed=3)
    s_syn = pipeline.fit_model_scores(tiny_model, 1e-1, 30, seed=3)
    assert not np.array_equal(s_cal["block0.attn"].a, s_syn["block0.attn"].a)
    assert np.array_equal(s_cal["block1.mlp"].a, s_syn["block1.mlp"].a)


def test_site_weight_shapes(tiny_model):
    assert pipeline.site_weight(tiny_model, "block0.attn").shape == (16, 48)
    assert pipeline.site_weight(tiny_model, "block1.mlp").shape == (32, 16)
    with pytest.raises(KeyError):
        pipeline.site_weight(tiny_model, "block0.head")
