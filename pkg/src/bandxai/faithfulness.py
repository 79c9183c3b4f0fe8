"""Perturbation metrics for band relevance: deletion, insertion, average drop.

Confidence always means the softmax probability of the patch's true class.
Deleted bands take their raw training-set mean; insertion starts from an
all-zero raw patch. Both are standardized by the network afterwards.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from bandxai.errors import ConfigError, DataError
from bandxai.hypercube import BandStats, Patch


@dataclass(frozen=True)
class BandRanking:
    order: np.ndarray
    method: str = ""
    patch_id: int = -1

    def __post_init__(self):
        order = np.asarray(self.order, dtype=np.int64).ravel()
        if not np.array_equal(np.sort(order), np.arange(order.size)):
            raise DataError("ranking must be a permutation of 0..b-1")
        object.__setattr__(self, "order", order)


@dataclass(frozen=True)
class FaithfulnessCurve:
    """Confidence after each perturbation step.

    ``groups[g]`` lists the bands changed between point ``g`` and ``g + 1``.
    """

    fractions: np.ndarray
    confidences: np.ndarray
    mode: str
    auc: float
    groups: tuple = ()
    patch_id: int = -1
    method: str = ""


@dataclass(frozen=True)
class AverageDropResult:
    drops: np.ndarray
    mean_drop: float


def rank_bands(rel) -> BandRanking:
    """Descending by score, ties by ascending band index.

    Accepts a :class:`~bandxai.explain.BandRelevance` or a plain score vector.
    """
    scores = np.asarray(getattr(rel, "scores", rel), dtype=np.float64).ravel()
    order = np.lexsort((np.arange(scores.size), -scores))
    return BandRanking(order, getattr(rel, "method", ""), getattr(rel, "patch_id", -1))


def band_groups(ranking, step: float = 0.2) -> list[np.ndarray]:
    """Consecutive chunks of ``ceil(step * b)`` ranked bands; the last may be shorter."""
    if not 0.0 < step <= 1.0:
        raise ConfigError("step must lie in (0, 1]")
    order = np.asarray(getattr(ranking, "order", ranking), dtype=np.int64)
    b = order.size
    size = max(1, math.ceil(step * b - 1e-9))
    return [order[i:i + size] for i in range(0, b, size)]


def auc(fractions, confidences=None) -> float:
    """Trapezoidal area under a confidence-fraction curve.

    Accepts ``(fractions, confidences)`` or a single sequence of ``(x, y)`` points.
    """
    if confidences is None:
        pts = np.asarray(fractions, dtype=np.float64)
        x, y = pts[:, 0], pts[:, 1]
    else:
        x = np.asarray(fractions, dtype=np.float64)
        y = np.asarray(confidences, dtype=np.float64)
    if x.size < 2 or x.shape != y.shape:
        raise DataError("auc needs at least two (fraction, confidence) points")
    dx = np.diff(x)
    if np.any(dx <= 0):
        raise DataError("fractions must be strictly increasing")
    return float(np.sum(dx * (y[:-1] + y[1:]) / 2.0))


def _values_label(patch) -> tuple[np.ndarray, int, int]:
    return np.asarray(patch.values, dtype=np.float64), patch.label, patch.id


def _progressive_inputs(x: np.ndarray, groups, start: np.ndarray, end: np.ndarray) -> np.ndarray:
    """Stack of patches going from ``start`` to ``end`` one band group at a time."""
    b = x.shape[-1]
    steps = np.zeros((len(groups) + 1, b), dtype=bool)
    for g, bands in enumerate(groups):
        steps[g + 1:, bands] = True
    return np.where(steps[:, None, None, :], end[None], start[None])


def _curve(net, patch, ranking, step, mode, start, end, method="") -> FaithfulnessCurve:
    x, label, pid = _values_label(patch)
    groups = band_groups(ranking, step)
    batch = _progressive_inputs(x, groups, start, end)
    conf = net.predict_proba(batch)[:, label - 1]
    counts = np.concatenate([[0], np.cumsum([g.size for g in groups])])
    fractions = counts / x.shape[-1]
    return FaithfulnessCurve(fractions, conf, mode, auc(fractions, conf),
                             tuple(groups), pid, method or getattr(ranking, "method", ""))


def deletion_curve(net, patch: Patch, ranking, stats: BandStats, step: float = 0.2) -> FaithfulnessCurve:
    """Replace ranked bands with their training mean, most relevant first."""
    x = np.asarray(patch.values, dtype=np.float64)
    mean = np.broadcast_to(np.asarray(stats.mean, dtype=np.float64), x.shape)
    return _curve(net, patch, ranking, step, "deletion", x, mean)


def insertion_curve(net, patch: Patch, ranking, step: float = 0.2) -> FaithfulnessCurve:
    """Restore ranked bands into an all-zero patch, most relevant first."""
    x = np.asarray(patch.values, dtype=np.float64)
    return _curve(net, patch, ranking, step, "insertion", np.zeros_like(x), x)


def _normalized_relevance(rel, shape) -> np.ndarray:
    r = np.asarray(getattr(rel, "scores", getattr(rel, "values", rel)), dtype=np.float64)
    lo, hi = r.min(), r.max()
    if hi > lo:
        r = (r - lo) / (hi - lo)
    else:
        # constant map: fully kept if positive, fully suppressed otherwise
        r = np.full_like(r, 1.0 if hi > 0 else 0.0)
    return np.broadcast_to(r, shape)


def average_drop(net, patch: Patch, rel) -> float:
    """Percentage drop of true-class confidence when the standardized input is
    multiplied by the min-max normalized relevance.

    Band-level relevance is broadcast over the spatial positions. Returns
    ``nan`` when the intact confidence is zero.
    """
    x, label, _ = _values_label(patch)
    z = net.standardize(x[None])[..., 0]
    masked = z * _normalized_relevance(rel, z.shape)
    conf = net.predict_proba(np.concatenate([z, masked]), standardized=True)[:, label - 1]
    c0, cm = conf
    if c0 == 0:
        return math.nan
    return max(0.0, c0 - cm) / c0 * 100.0


def summarize_average_drop(drops) -> AverageDropResult:
    drops = np.asarray(drops, dtype=np.float64)
    valid = drops[np.isfinite(drops)]
    return AverageDropResult(drops, float(valid.mean()) if valid.size else math.nan)


def random_baseline_curves(net, patch: Patch, stats: BandStats, step: float = 0.2,
                           trials: int = 20, seed: int = 0) -> tuple[float, float]:
    """Mean (deletion AUC, insertion AUC) over uniformly random rankings."""
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    x, label, pid = _values_label(patch)
    b = x.shape[-1]
    rng = np.random.default_rng([int(seed), int(pid) + 1])
    mean = np.broadcast_to(np.asarray(stats.mean, dtype=np.float64), x.shape)
    zeros = np.zeros_like(x)
    batches = []
    for _ in range(trials):
        groups = band_groups(rng.permutation(b), step)
        batches.append(_progressive_inputs(x, groups, x, mean))
        batches.append(_progressive_inputs(x, groups, zeros, x))
    points = len(groups) + 1
    conf = net.predict_proba(np.concatenate(batches))[:, label - 1].reshape(trials, 2, points)
    counts = np.concatenate([[0], np.cumsum([g.size for g in groups])])
    fractions = counts / b
    del_auc = np.mean([auc(fractions, c) for c in conf[:, 0]])
    ins_auc = np.mean([auc(fractions, c) for c in conf[:, 1]])
    return float(del_auc), float(ins_auc)
