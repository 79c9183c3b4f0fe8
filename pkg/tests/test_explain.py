import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bandxai import ConfigError, NumericalError
from bandxai.classifier import LayerSpec, NetworkSpec, init_network, preset_spec
from bandxai.explain import (LrpConfig, RelevanceMap, RiseConfig, ShapConfig, aggregate_band_relevance,
                             exact_shapley, explain_band_relevance, lrp_explain, resolve_lrp_rules, rise_explain,
                             shap_explain)
from bandxai.hypercube import BandStats
from helpers import LinearBandModel, dense_net, identity_stats, make_patch

ALL_EPS = {1: "epsilon", 3: "epsilon", 5: "epsilon"}


# -- LRP ------------------------------------------------------------------------

def test_single_dense_layer_lrp0_closed_form():
    net = dense_net([5, 3], seed=1)
    x = np.random.default_rng(2).normal(size=(1, 1, 5))
    logits = net.logits(x[None])[0]
    R = lrp_explain(net, x, 2).values.ravel()
    np.testing.assert_allclose(R, x.ravel() * net.params[1]["weight"][:, 1], rtol=1e-12)
    assert R.sum() == pytest.approx(logits[1], rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10 ** 6), target=st.integers(1, 3))
def test_lrp0_conservation_bias_free(seed, target):
    net = dense_net([8, 6, 4, 3], seed=seed)
    x = np.random.default_rng(seed).normal(size=(1, 1, 8))
    logit = net.logits(x[None])[0, target - 1]
    total = lrp_explain(net, x, target).values.sum()
    assert abs(total - logit) <= 1e-4 * max(abs(logit), 1e-12)


def test_positive_weights_gamma_matches_lrp0():
    net = dense_net([6, 4, 2], seed=3)
    for p in net.params:
        if p:
            p["weight"] = np.abs(p["weight"])
    x = np.abs(np.random.default_rng(0).normal(size=(1, 1, 6)))
    lrp0 = lrp_explain(net, x, 1).values
    gamma = lrp_explain(net, x, 1, LrpConfig(rule_map={1: "gamma", 3: "gamma"})).values
    np.testing.assert_allclose(gamma, lrp0, rtol=1e-12)


def test_vanishing_gamma_and_epsilon_coincide_with_lrp0():
    net = dense_net([6, 4, 2], seed=5)
    x = np.random.default_rng(1).normal(size=(1, 1, 6))
    lrp0 = lrp_explain(net, x, 2).values
    tiny = LrpConfig(epsilon=1e-13, gamma=1e-13)
    for rule in ("gamma", "epsilon"):
        r = lrp_explain(net, x, 2, LrpConfig(tiny.epsilon, tiny.gamma, rule_map={1: rule, 3: rule})).values
        np.testing.assert_allclose(r, lrp0, rtol=1e-6, atol=1e-12)


def test_default_rule_assignment():
    shallow = init_network(preset_spec("shallow", (3, 3, 40), 4))
    assert resolve_lrp_rules(shallow, LrpConfig()) == {0: "gamma", 1: "gamma", 4: "lrp0"}
    deep = init_network(preset_spec("deep", (3, 3, 40), 4))
    assert resolve_lrp_rules(deep, LrpConfig()) == {0: "gamma", 2: "epsilon", 4: "epsilon", 7: "lrp0", 9: "lrp0"}
    assert LrpConfig().gamma == 0.25
    assert resolve_lrp_rules(deep, LrpConfig(gamma_blocks=2))[2] == "gamma"
    with pytest.raises(ConfigError):
        resolve_lrp_rules(deep, LrpConfig(rule_map={0: "alpha-beta"}))


def test_single_layer_epsilon_absorbs():
    for seed in range(50):
        net = dense_net([5, 3], seed=seed)
        x = np.random.default_rng(seed).normal(size=(1, 1, 5))
        logit = net.logits(x[None])[0, 0]
        total = lrp_explain(net, x, 1, LrpConfig(epsilon=0.5, rule_map={1: "epsilon"})).values.sum()
        assert abs(total) <= abs(logit) + 1e-12


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 10 ** 6), eps=st.sampled_from([1e-3, 0.1, 1.0]))
def test_epsilon_absorbs_with_sign_consistent_relevance(seed, eps):
    # non-negative weights above the first layer keep hidden relevances of one sign
    net = dense_net([8, 6, 4, 3], seed=seed)
    for i in (3, 5):
        net.params[i]["weight"] = np.abs(net.params[i]["weight"])
    x = np.random.default_rng(seed).normal(size=(1, 1, 8))
    logit = net.logits(x[None])[0, 0]
    total = lrp_explain(net, x, 1, LrpConfig(epsilon=eps, rule_map=ALL_EPS)).values.sum()
    assert abs(total) <= abs(logit) + 1e-9


def test_conv_network_relevance_shape_and_determinism():
    net = init_network(preset_spec("deep", (3, 3, 12), 3, seed=1))
    x = np.random.default_rng(0).normal(size=(3, 3, 12))
    a = lrp_explain(net, make_patch(x, 2), 2)
    b = lrp_explain(net, make_patch(x, 2), 2)
    assert a.values.shape == (3, 3, 12)
    np.testing.assert_array_equal(a.values, b.values)


def test_zero_denominator_raises():
    # gamma-modified weights (1.25, -1.25) cancel on input (1, 1) while the true output is -0.25
    spec = NetworkSpec((1, 1, 2), (LayerSpec("flatten"), LayerSpec("dense", width=1, lrp_rule="gamma"),
                                   LayerSpec("dense", width=2), LayerSpec("softmax")), 2)
    net = init_network(spec)
    net.params[1]["weight"] = np.array([[1.0], [-1.25]])
    net.params[2]["weight"] = np.array([[1.0, -1.0]])
    with pytest.raises(NumericalError):
        lrp_explain(net, np.ones((1, 1, 2)), 1)


def test_target_out_of_range():
    net = dense_net([4, 2])
    with pytest.raises(ConfigError):
        lrp_explain(net, np.ones((1, 1, 4)), 3)
    with pytest.raises(ConfigError):
        rise_explain(net, np.ones((1, 1, 4)), 0)
    with pytest.raises(ConfigError):
        shap_explain(net, np.ones((1, 1, 4)), 3, identity_stats(4))
    with pytest.raises(ConfigError):
        exact_shapley(net, np.ones((1, 1, 4)), 3, identity_stats(4))


# -- aggregation ----------------------------------------------------------------

def test_aggregate_examples():
    v = np.zeros((3, 3, 5))
    v[1, 2, 3] = 2.5
    np.testing.assert_array_equal(aggregate_band_relevance(RelevanceMap(v, 1, "lrp")).scores, [0, 0, 0, 2.5, 0])
    neg = -np.abs(np.random.default_rng(0).normal(size=(3, 3, 5))) - 0.1
    np.testing.assert_array_equal(aggregate_band_relevance(RelevanceMap(neg, 1, "lrp")).scores, np.zeros(5))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10 ** 6), h=st.integers(1, 4), w=st.integers(1, 4), b=st.integers(1, 7))
def test_aggregate_matches_double_loop(seed, h, w, b):
    v = np.random.default_rng(seed).normal(size=(h, w, b))
    expected = [sum(max(v[i, j, k], 0.0) for i in range(h) for j in range(w)) for k in range(b)]
    np.testing.assert_allclose(aggregate_band_relevance(RelevanceMap(v, 1, "lrp")).scores, expected, rtol=1e-12)


def test_relevance_map_rejects_nan():
    with pytest.raises(NumericalError):
        RelevanceMap(np.array([np.nan]), 1, "lrp")


# -- SHAP -----------------------------------------------------------------------

def _brute_shapley(model, x, mean, target):
    """Shapley values from the permutation definition."""
    b = x.shape[-1]

    def value(members):
        keep = np.zeros(b, dtype=bool)
        keep[list(members)] = True
        return model.predict_proba(np.where(keep, x, mean)[None])[0, target - 1]

    phi = np.zeros(b)
    perms = list(itertools.permutations(range(b)))
    for perm in perms:
        members = []
        for k in perm:
            before = value(members)
            members.append(k)
            phi[k] += value(members) - before
    return phi / len(perms)


def _micro(b=6, seed=0, c=3):
    net = dense_net([b, 5, c], seed=seed, bias_scale=0.3)
    rng = np.random.default_rng(seed + 7)
    x = rng.normal(size=(1, 1, b))
    stats = BandStats(rng.normal(size=b) * 0.5, np.ones(b))
    return net, x, stats


def test_exact_shapley_matches_permutation_definition():
    net, x, stats = _micro(b=5, seed=1)
    exact = exact_shapley(net, x, 2, stats).scores
    np.testing.assert_allclose(exact, _brute_shapley(net, x, stats.mean, 2), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_exact_shapley_efficiency(seed):
    net, x, stats = _micro(b=6, seed=seed)
    full = net.predict_proba(x[None])[0, 0]
    base = net.predict_proba(np.broadcast_to(stats.mean, x.shape)[None])[0, 0]
    assert exact_shapley(net, x, 1, stats).scores.sum() == pytest.approx(full - base, abs=1e-6)


def test_exact_shapley_single_band():
    model = LinearBandModel([[2.0]], [0.5])
    x = np.full((1, 1, 1), 3.0)
    score = exact_shapley(model, x, 1, identity_stats(1, [1.0])).scores
    np.testing.assert_allclose(score, [2.0 * 3.0 - 2.0 * 1.0])


def test_symmetric_bands_get_equal_scores():
    net = dense_net([4, 3, 2], seed=2, bias_scale=0.2)
    net.params[1]["weight"][1] = net.params[1]["weight"][0]
    x = np.array([0.7, 0.7, -0.2, 1.1]).reshape(1, 1, 4)
    s = exact_shapley(net, x, 1, identity_stats(4)).scores
    assert s[0] == pytest.approx(s[1], abs=1e-14)


def test_additive_model_exact_and_sampled_agree():
    rng = np.random.default_rng(3)
    w, x, mean = rng.normal(size=7), rng.normal(size=(2, 2, 7)), rng.normal(size=7)
    model = LinearBandModel(w[:, None])
    expected = w * (x.mean(axis=(0, 1)) - mean)
    stats = identity_stats(7, mean)
    np.testing.assert_allclose(exact_shapley(model, x, 1, stats).scores, expected, atol=1e-12)
    for dist in ("shapley", "bernoulli"):
        sampled = shap_explain(model, x, 1, stats, ShapConfig(subset_samples=5, subset_distribution=dist)).scores
        np.testing.assert_allclose(sampled, expected, atol=1e-12)


def test_null_player_scores_exactly_zero():
    net, x, stats = _micro(b=6, seed=4)
    net.params[1]["weight"][3] = 0.0
    assert exact_shapley(net, x, 1, stats).scores[3] == 0.0
    for dist in ("shapley", "bernoulli"):
        assert shap_explain(net, x, 1, stats, ShapConfig(30, subset_distribution=dist)).scores[3] == 0.0


def test_sampled_error_shrinks_with_more_subsets():
    net, x, stats = _micro(b=8, seed=0)
    exact = exact_shapley(net, x, 1, stats).scores
    err = {n: np.mean([np.abs(shap_explain(net, x, 1, stats, ShapConfig(n, seed=s)).scores - exact).mean()
                       for s in range(20)]) for n in (10, 30, 100, 300)}
    assert err[10] > err[30] > err[100] > err[300]


def test_shap_defaults_and_validation():
    assert ShapConfig().subset_samples == 30
    with pytest.raises(ConfigError):
        ShapConfig(subset_samples=0)
    with pytest.raises(ConfigError):
        ShapConfig(subset_distribution="uniform")
    net, x, stats = _micro(b=16)
    with pytest.raises(ConfigError):
        exact_shapley(net, x, 1, stats)


# -- RISE -----------------------------------------------------------------------

def test_rise_density_one_returns_intact_confidence():
    net = init_network(preset_spec("shallow", (3, 3, 10), 3, seed=2))
    x = np.random.default_rng(0).normal(size=(3, 3, 10))
    patch = make_patch(x)
    conf = net.predict_proba(patch.values[None])[0, 1]
    r = rise_explain(net, patch, 2, RiseConfig(mask_count=20, density=1.0))
    np.testing.assert_allclose(r.scores, conf, rtol=1e-12)


def _rise_expectation(w, xbar, bias, p):
    # E[f(m * x) | m_k = 1] for f = bias + sum_j w_j m_j xbar_j
    contrib = w * xbar
    return bias + p * contrib.sum() + (1 - p) * contrib


@pytest.mark.parametrize("density", [0.5, 0.3])
def test_rise_within_three_standard_errors_on_linear_model(density):
    rng = np.random.default_rng(11)
    w, x = rng.normal(size=10), rng.normal(1.0, 0.5, size=(3, 3, 10))
    model = LinearBandModel(w[:, None], [0.2])
    r = rise_explain(model, x, 1, RiseConfig(mask_count=5000, density=density, seed=4))
    expected = _rise_expectation(w, x.mean(axis=(0, 1)), 0.2, density)
    assert np.all(np.abs(r.scores - expected) <= 3 * r.stderr)


def test_rise_score_differences_converge():
    rng = np.random.default_rng(5)
    w, x = rng.normal(size=6), rng.normal(size=(1, 1, 6))
    model = LinearBandModel(w[:, None])
    expected = _rise_expectation(w, x.ravel(), 0.0, 0.5)
    errs = []
    for n in (200, 20000):
        s = rise_explain(model, x, 1, RiseConfig(mask_count=n, seed=1)).scores
        errs.append(np.abs(np.diff(s) - np.diff(expected)).max())
    assert errs[1] < errs[0]


def test_rise_raw_space_zeroes_raw_values():
    net = dense_net([4, 2], seed=1)
    net_shift = type(net)(net.spec, net.params, BandStats(np.full(4, 0.5), np.ones(4)))
    x = np.ones((1, 1, 4))
    raw = rise_explain(net_shift, x, 1, RiseConfig(mask_count=50, mask_space="raw")).scores
    inp = rise_explain(net_shift, x, 1, RiseConfig(mask_count=50, mask_space="input")).scores
    assert not np.allclose(raw, inp)


def test_rise_defaults_and_validation():
    assert (RiseConfig().mask_count, RiseConfig().density) == (5000, 0.5)
    for kw in (dict(mask_count=0), dict(density=0.0), dict(density=1.5), dict(mask_space="latent")):
        with pytest.raises(ConfigError):
            RiseConfig(**kw)


# -- dispatch and determinism ---------------------------------------------------

@pytest.mark.parametrize("method", ["lrp", "shap", "rise"])
def test_methods_are_deterministic(method):
    net = init_network(preset_spec("shallow", (3, 3, 8), 3, seed=0))
    patch = make_patch(np.random.default_rng(1).normal(size=(3, 3, 8)), label=2, pid=17)
    stats = identity_stats(8)
    a = explain_band_relevance(net, patch, method, stats, rise=RiseConfig(mask_count=300))
    b = explain_band_relevance(net, patch, method, stats, rise=RiseConfig(mask_count=300))
    assert a.scores.shape == (8,) and a.target_class == 2 and a.patch_id == 17
    np.testing.assert_array_equal(a.scores, b.scores)


def test_different_patches_get_different_streams():
    model = LinearBandModel(np.ones((4, 1)))
    x = np.ones((1, 1, 4))
    a = rise_explain(model, make_patch(x, pid=0), 1, RiseConfig(mask_count=50)).scores
    b = rise_explain(model, make_patch(x, pid=1), 1, RiseConfig(mask_count=50)).scores
    assert not np.array_equal(a, b)


def test_unknown_method():
    net = dense_net([4, 2])
    with pytest.raises(ConfigError):
        explain_band_relevance(net, make_patch(np.ones((1, 1, 4))), "gradcam", identity_stats(4))


def test_explain_lrp_through_dispatch_matches_aggregate():
    net = init_network(preset_spec("shallow", (3, 3, 8), 3, seed=3))
    patch = make_patch(np.random.default_rng(2).normal(size=(3, 3, 8)), label=1)
    direct = aggregate_band_relevance(lrp_explain(net, patch, 1)).scores
    np.testing.assert_array_equal(explain_band_relevance(net, patch, "lrp", identity_stats(8)).scores, direct)
    assert math.isclose(direct.sum(), np.maximum(lrp_explain(net, patch, 1).values, 0).sum())
