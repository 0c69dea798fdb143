"""Importance-score pruning: a threshold from the pruning rate, a binary keep-mask,
and physical removal of the masked feature columns.

Scores are ranked by magnitude. Ties are broken toward lower indices so that the
number of kept features is always exactly ``keep_count(d, rate)``.
"""
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyScores,
    InconsistentThreshold,
)
from .matcore import as_matrix, as_vector


@dataclass(frozen=True)
class ImportanceScores:
    a: np.ndarray
    lam: float = 0.0
    layer_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "a", as_vector(self.a, "scores"))
        if self.lam < 0:
            raise ValueError("lambda must be >= 0")


@dataclass(frozen=True)
class PruneMask:
    mask: np.ndarray  # bool
    tau: float

    @property
    def kept(self):
        return int(self.mask.sum())

    @property
    def indices(self):
        return np.flatnonzero(self.mask)


def keep_count(d, rate):
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"pruning rate must be in [0, 1), got {rate}")
    # the 1e-9 guard keeps e.g. (1 - 0.7) * 10 = 3.0000000000000004 from rounding up to 4
    return max(1, math.ceil((1.0 - rate) * d - 1e-9))


def _ranking(scores):
    mag = np.abs(scores)
    # stable sort on -|a|: equal magnitudes keep index order
    return np.argsort(-mag, kind="stable"), mag


def threshold_from_rate(scores, rate):
    """tau = the keep-th largest |a_i|, keep = max(1, ceil((1 - rate) * d))."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if scores.size == 0:
        raise EmptyScores("no scores to rank")
    keep = keep_count(scores.size, rate)
    order, mag = _ranking(scores)
    return float(mag[order[keep - 1]])


def binarize(scores, tau, keep):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    if not 1 <= keep <= scores.size:
        raise ValueError(f"keep must be in [1, {scores.size}], got {keep}")
    order, mag = _ranking(scores)
    mask = np.zeros(scores.size, dtype=bool)
    mask[order[:keep]] = True
    if (mag[mask] < tau).any() or (mag[~mask] > tau).any():
        raise InconsistentThreshold(f"tau={tau} cannot select exactly {keep} of {scores.size} scores")
    return PruneMask(mask, float(tau))


def mask_from_rate(scores, rate):
    scores = np.asarray(scores, dtype=np.float64).ravel()
    tau = threshold_from_rate(scores, rate)
    return binarize(scores, tau, keep_count(scores.size, rate))


def apply_mask(X, mask):
    """Column selection; the same as ``X @ diag(mask)`` followed by dropping the zero columns."""
    X = as_matrix(X)
    m = mask.mask if isinstance(mask, PruneMask) else np.asarray(mask, dtype=bool)
    if X.shape[1] != m.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[1]} columns, mask has {m.shape[0]} entries")
    return np.ascontiguousarray(X[:, m])


def global_masks(score_map, rate):
    """One threshold over the concatenation of every score vector (insertion order
    fixes the tie-break). Returns {layer_id: PruneMask}."""
    names = list(score_map)
    if not names:
        raise EmptyScores("no score vectors")
    vecs = [np.asarray(score_map[k], dtype=np.float64).ravel() for k in names]
    allv = np.concatenate(vecs)
    if allv.size == 0:
        raise EmptyScores("no scores to rank")
    full = mask_from_rate(allv, rate)
    mask = full.mask.copy()
    owner = np.repeat(np.arange(len(vecs)), [v.size for v in vecs])
    bounds = np.cumsum([0] + [v.size for v in vecs])
    order, _ = _ranking(allv)
    for li, v in enumerate(vecs):
        lo, hi = bounds[li], bounds[li + 1]
        if v.size == 0 or mask[lo:hi].any():
            continue
        # keep >= 1 per layer; pay for it with the weakest kept score of a layer
        # that can spare one, so the global total stays exact
        mask[lo + int(np.argmax(np.abs(v)))] = True
        counts = np.bincount(owner[mask], minlength=len(vecs))
        for idx in order[::-1]:
            if mask[idx] and counts[owner[idx]] > 1:
                mask[idx] = False
                break
    return {name: PruneMask(mask[bounds[i]:bounds[i + 1]].copy(), full.tau)
            for i, name in enumerate(names)}
