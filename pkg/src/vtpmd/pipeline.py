"""Glue between the model, the scores, calibration data and the dataset."""
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .errors import DimensionMismatch
from .prune_model import site_names
from .scorefit import FitConfig, fit_scores
from .vit import forward

NORM_MEAN = (0.5, 0.5, 0.5)
NORM_STD = (0.5, 0.5, 0.5)
CALIB_ROWS = 64


def seed_from_env(default=0):
    return int(os.environ.get("VTPMD_SEED", default))


def rng_for(seed, *stream):
    return np.random.default_rng([seed, *stream])


def site_weight(model, site):
    """The weight whose input features a site's scores gate."""
    blk_name, kind = site.split(".")
    blk = model.blocks[int(blk_name[len("block"):])]
    if kind == "attn":
        return np.hstack([blk.wq.weight(), blk.wk.weight(), blk.wv.weight()])
    if kind == "mlp":
        return blk.mlp2.weight()
    raise KeyError(site)


def fit_model_scores(model, lam, iters, calib=None, seed=0):
    """Scores for every prunable site. ``calib`` maps site -> activations
    (samples x width); missing sites get seeded standard-normal activations."""
    calib = calib or {}
    out = {}
    for i, site in enumerate(site_names(model)):
        W = site_weight(model, site)
        X = calib.get(site)
        if X is None:
            X = rng_for(seed, 1, i).standard_normal((CALIB_ROWS, W.shape[0]))
        out[site] = fit_scores(W, FitConfig(X, lam, iters), layer_id=site)
    return out


def normalize(images, mean=NORM_MEAN, std=NORM_STD):
    """(n, 3072) images in [0, 1] -> per-channel standardized."""
    x = images.reshape(images.shape[0], 3, -1)
    x = (x - np.asarray(mean)[:, None]) / np.asarray(std)[:, None]
    return x.reshape(images.shape[0], -1)


def evaluate(model, batch, limit, chunk=500, jobs=1):
    """Top-1 accuracy over the first min(limit, len(batch)) records."""
    if limit < 1:
        raise ValueError("limit must be >= 1")
    c = model.config
    if (c.image_size, c.channels) != (32, 3):
        raise DimensionMismatch(f"model expects {c.channels}x{c.image_size}x{c.image_size}, CIFAR-10 is 3x32x32")
    n = min(limit, len(batch))

    def predict(start):
        stop = min(start + chunk, n)
        logits = forward(model, normalize(batch.images(start, stop)))
        return np.argmax(logits, axis=-1)

    starts = range(0, n, chunk)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            preds = list(ex.map(predict, starts))
    else:
        preds = [predict(s) for s in starts]
    pred = np.concatenate(preds)
    correct = int(np.sum(pred == batch.labels[:n]))
    return {"accuracy": correct / n, "n": n}
