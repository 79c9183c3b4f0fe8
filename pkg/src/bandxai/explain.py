"""Band-level attribution: LRP, sampled and exact Shapley values, RISE.

The perturbation methods only need a ``model`` with a
``predict_proba(values) -> (n, c)`` method taking raw ``(n, h', w', b)``
patches, so they also work on hand-built reference models. LRP needs the
layer structure of a :class:`~bandxai.classifier.Network`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from bandxai.classifier import WEIGHTED_KINDS, Network, _Flatten, _ReLU, forward
from bandxai.errors import ConfigError, NumericalError
from bandxai.hypercube import BandStats, Patch

METHODS = ("lrp", "shap", "rise")


@dataclass(frozen=True)
class RelevanceMap:
    values: np.ndarray
    target_class: int
    method: str
    patch_id: int = -1

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericalError("relevance map contains non-finite values")


@dataclass(frozen=True)
class BandRelevance:
    """One score per band; ``stderr`` is set by the Monte Carlo estimators."""

    scores: np.ndarray
    target_class: int
    method: str
    patch_id: int = -1
    stderr: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64).ravel()
        if not np.all(np.isfinite(scores)):
            raise NumericalError("band relevance contains non-finite values")
        object.__setattr__(self, "scores", scores)


@dataclass(frozen=True)
class LrpConfig:
    """LRP settings.

    Weighted layers in the first ``gamma_blocks`` conv blocks use the gamma
    rule, later conv layers the epsilon rule and dense layers LRP-0. A conv
    block ends at a ReLU. ``rule_map`` overrides the rule for individual layer
    indices (positions in ``NetworkSpec.layers``).
    """

    epsilon: float = 1e-6
    gamma: float = 0.25
    gamma_blocks: int = 1
    rule_map: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        object.__setattr__(self, "rule_map", {int(k): v for k, v in self.rule_map.items()})


@dataclass(frozen=True)
class ShapConfig:
    """``subset_distribution`` is ``"shapley"`` (coalition size uniform, then a
    uniform subset of that size) or ``"bernoulli"`` (each other band kept
    with probability 1/2)."""

    subset_samples: int = 30
    baseline: str = "train-mean"
    seed: int = 0
    subset_distribution: str = "shapley"

    def __post_init__(self):
        if self.subset_samples < 1:
            raise ConfigError("subset_samples must be >= 1")
        if self.baseline != "train-mean":
            raise ConfigError("only the train-mean baseline is supported")
        if self.subset_distribution not in ("shapley", "bernoulli"):
            raise ConfigError(f"unknown subset distribution {self.subset_distribution!r}")


@dataclass(frozen=True)
class RiseConfig:
    """``mask_space="input"`` multiplies the masks into what the model consumes
    (the standardized patch for a :class:`Network`); ``"raw"`` zeroes raw
    reflectance instead."""

    mask_count: int = 5000
    density: float = 0.5
    seed: int = 0
    mask_space: str = "input"

    def __post_init__(self):
        if self.mask_count < 1:
            raise ConfigError("mask_count must be >= 1")
        if not 0.0 < self.density <= 1.0:
            raise ConfigError("density must lie in (0, 1]")
        if self.mask_space not in ("input", "raw"):
            raise ConfigError(f"unknown mask space {self.mask_space!r}")


def _patch_values(patch) -> tuple[np.ndarray, int]:
    if isinstance(patch, Patch):
        return np.asarray(patch.values, dtype=np.float64), patch.id
    return np.asarray(patch, dtype=np.float64), -1


def _check_target(target: int, class_count: int) -> int:
    if not 1 <= target <= class_count:
        raise ConfigError(f"target class {target} outside 1..{class_count}")
    return target - 1


def _column(p: np.ndarray, target: int) -> np.ndarray:
    """Target-class column of a batch of model outputs, validating the class id."""
    if not 1 <= target <= p.shape[1]:
        raise ConfigError(f"target class {target} outside 1..{p.shape[1]}")
    return p[:, target - 1]


def _stream(seed: int, patch_id: int) -> np.random.Generator:
    # patch ids may be -1 for bare arrays; SeedSequence needs non-negative words
    return np.random.default_rng([int(seed), int(patch_id) + 1])


# -- LRP -----------------------------------------------------------------------

def resolve_lrp_rules(net: Network, cfg: LrpConfig) -> dict[int, str]:
    """Map each weighted layer index to the LRP rule applied there."""
    rules, block = {}, 0
    for i, ls in enumerate(net.spec.layers):
        if ls.kind == "relu":
            block += 1
            continue
        if ls.kind not in WEIGHTED_KINDS:
            continue
        if i in cfg.rule_map:
            rule = cfg.rule_map[i]
        elif ls.lrp_rule is not None:
            rule = ls.lrp_rule
        elif ls.kind == "dense":
            rule = "lrp0"
        else:
            rule = "gamma" if block < cfg.gamma_blocks else "epsilon"
        if rule not in ("lrp0", "epsilon", "gamma"):
            raise ConfigError(f"unknown LRP rule {rule!r} for layer {i}")
        rules[i] = rule
    return rules


def _lrp_step(layer, a, W, b, R, rule, cfg: LrpConfig):
    if rule == "gamma":
        W = W + cfg.gamma * np.maximum(W, 0.0)
        b = b + cfg.gamma * np.maximum(b, 0.0)
    z = layer.linear(a, W, b)
    if rule == "epsilon":
        z = z + cfg.epsilon * np.where(z >= 0, 1.0, -1.0)
    zero = z == 0
    if np.any(zero & (R != 0)):
        raise NumericalError(f"zero LRP denominator under rule {rule!r}")
    s = np.divide(R, z, out=np.zeros_like(z), where=~zero)
    return a * layer.transpose(s, W)


def lrp_explain(net: Network, patch, target: int, cfg: LrpConfig = LrpConfig()) -> RelevanceMap:
    """Layer-wise relevance propagation of the ``target`` logit back to the input.

    Relevance is attributed to the standardized input the network sees, and
    the returned map has the patch's ``(h', w', b)`` shape.
    """
    t = _check_target(target, net.class_count)
    values, pid = _patch_values(patch)
    logits, _, trace = forward(net, values, trace=True)
    rules = resolve_lrp_rules(net, cfg)
    R = np.zeros((1, net.class_count))
    R[0, t] = logits[t]
    for i in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[i]
        if isinstance(layer, _ReLU):
            continue
        if isinstance(layer, _Flatten):
            R = R.reshape((1,) + layer.in_shape)
            continue
        p = net.params[i]
        R = _lrp_step(layer, trace.activations[i][None], p["weight"], p["bias"], R, rules[i], cfg)
    return RelevanceMap(R[0, ..., 0], target, "lrp", pid)


def aggregate_band_relevance(rmap: RelevanceMap) -> BandRelevance:
    """Sum of each band's positive relevance over the spatial positions."""
    values = np.asarray(rmap.values, dtype=np.float64)
    scores = np.maximum(values, 0.0).reshape(-1, values.shape[-1]).sum(axis=0)
    return BandRelevance(scores, rmap.target_class, rmap.method, rmap.patch_id)


# -- Shapley -------------------------------------------------------------------

def _fill(x: np.ndarray, keep: np.ndarray, fill: np.ndarray) -> np.ndarray:
    """Batch of copies of ``x`` with bands where ``keep`` is False set to ``fill``."""
    return np.where(keep[:, None, None, :], x[None], fill[None, None, None, :])


def _sample_coalitions(rng, b: int, samples: int, distribution: str) -> np.ndarray:
    """Boolean ``(b, samples, b)``: coalitions of the other bands for each band."""
    eye = np.eye(b, dtype=bool)[:, None, :]
    if distribution == "bernoulli":
        S = rng.random((b, samples, b)) < 0.5
    else:
        keys = rng.random((b, samples, b))
        keys[np.broadcast_to(eye, keys.shape)] = np.inf
        rank = np.argsort(np.argsort(keys, axis=2), axis=2)
        size = rng.integers(0, b, size=(b, samples))
        S = rank < size[..., None]
    return S & ~eye


def shap_explain(model, patch, target: int, stats: BandStats,
                 cfg: ShapConfig = ShapConfig()) -> BandRelevance:
    """Sampled Shapley values per band against the train-mean baseline.

    For every band, ``cfg.subset_samples`` coalitions of the other bands are
    drawn; the score is the mean of ``p(S + band) - p(S)`` for the target-class
    probability, with absent bands set to their training mean.
    """
    values, pid = _patch_values(patch)
    b = values.shape[-1]
    rng = _stream(cfg.seed, pid)
    S = _sample_coalitions(rng, b, cfg.subset_samples, cfg.subset_distribution)
    eye = np.eye(b, dtype=bool)[:, None, :]
    incl = (S | eye).reshape(-1, b)
    excl = S.reshape(-1, b)
    fill = np.asarray(stats.mean, dtype=np.float64)
    p = _column(model.predict_proba(_fill(values, np.concatenate([incl, excl]), fill)), target)
    n = incl.shape[0]
    diff = (p[:n] - p[n:]).reshape(b, cfg.subset_samples)
    scores = diff.mean(axis=1)
    stderr = (diff.std(axis=1, ddof=1) / math.sqrt(cfg.subset_samples)
              if cfg.subset_samples > 1 else np.full(b, np.nan))
    return BandRelevance(scores, target, "shap", pid, stderr=stderr)


def exact_shapley(model, patch, target: int, stats: BandStats, max_bands: int = 15) -> BandRelevance:
    """Exact Shapley values by enumerating all ``2**b`` coalitions; ``b <= max_bands``."""
    values, pid = _patch_values(patch)
    b = values.shape[-1]
    if b > max_bands:
        raise ConfigError(f"exact Shapley over {b} bands needs 2**{b} evaluations; limit is {max_bands}")
    codes = np.arange(2 ** b)
    masks = ((codes[:, None] >> np.arange(b)) & 1).astype(bool)
    v = _column(model.predict_proba(_fill(values, masks, np.asarray(stats.mean, dtype=np.float64))), target)
    sizes = masks.sum(axis=1)
    weight = np.array([math.factorial(s) * math.factorial(b - s - 1) / math.factorial(b)
                       for s in range(b)])
    scores = np.empty(b)
    for k in range(b):
        without = codes[~masks[:, k]]
        scores[k] = np.sum(weight[sizes[without]] * (v[without | (1 << k)] - v[without]))
    return BandRelevance(scores, target, "exact_shapley", pid)


# -- RISE ------------------------------------------------------------------------

def rise_explain(model, patch, target: int, cfg: RiseConfig = RiseConfig()) -> BandRelevance:
    """Monte Carlo estimate of the target confidence given each band is visible.

    Masks are binary, one entry per band and constant over the spatial extent;
    masked-out bands are set to zero in the space chosen by ``cfg.mask_space``.
    """
    values, pid = _patch_values(patch)
    b = values.shape[-1]
    rng = _stream(cfg.seed, pid)
    masks = rng.random((cfg.mask_count, b)) < cfg.density
    standardize = getattr(model, "standardize", None)
    if cfg.mask_space == "input" and standardize is not None:
        z = standardize(values[None])[..., 0]
        conf = _column(model.predict_proba(z * masks[:, None, None, :], standardized=True), target)
    else:
        conf = _column(model.predict_proba(values[None] * masks[:, None, None, :]), target)
    weighted = masks * conf[:, None] / cfg.density
    scores = weighted.mean(axis=0)
    stderr = (weighted.std(axis=0, ddof=1) / math.sqrt(cfg.mask_count)
              if cfg.mask_count > 1 else np.full(b, np.nan))
    return BandRelevance(scores, target, "rise", pid, stderr=stderr)


def explain_band_relevance(net: Network, patch: Patch, method: str, stats: BandStats,
                           lrp: LrpConfig = LrpConfig(), shap: ShapConfig = ShapConfig(),
                           rise: RiseConfig = RiseConfig(), target: int | None = None) -> BandRelevance:
    """Band relevance for ``patch`` by ``method``, targeting the true label by default."""
    target = patch.label if target is None else target
    if method == "lrp":
        return aggregate_band_relevance(lrp_explain(net, patch, target, lrp))
    if method == "shap":
        return shap_explain(net, patch, target, stats, shap)
    if method == "rise":
        return rise_explain(net, patch, target, rise)
    raise ConfigError(f"unknown explanation method {method!r}")
