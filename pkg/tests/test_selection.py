import csv
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from bandxai import ConfigError, DataError
from bandxai.classifier import TrainConfig, evaluate_accuracy, init_network, preset_spec, train
from bandxai.explain import BandRelevance
from bandxai.faithfulness import FaithfulnessCurve, deletion_curve, insertion_curve, rank_bands
from bandxai.hypercube import BandStats, SplitSpec, SyntheticSpec, extract_patches, generate_synthetic_cube, \
    split_patches
from bandxai.selection import (BandSubset, ComparisonRow, CurveRecord, InfluenceScores, aggregate_influence,
                               compare_report, retrain_reduced, select_top_k)
from helpers import make_patch
from test_faithfulness import SoftmaxLinear


def _record(groups, del_conf, ins_conf, pid=0, method="m"):
    groups = tuple(np.asarray(g) for g in groups)
    f = np.linspace(0, 1, len(groups) + 1)
    return CurveRecord(pid, FaithfulnessCurve(f, np.asarray(del_conf, float), "deletion", 0.0, groups),
                       FaithfulnessCurve(f, np.asarray(ins_conf, float), "insertion", 0.0, groups), method)


# -- influence ------------------------------------------------------------------

def test_two_band_example():
    rec = _record([[0], [1]], [1.0, 0.4, 0.3], [0.3, 0.3, 0.3])
    np.testing.assert_allclose(aggregate_influence([rec]).scores, [1.0, 0.0])


def test_identical_deltas_give_half():
    rec = _record([[0, 1], [2, 3]], [1.0, 0.8, 0.6], [0.6, 0.8, 1.0])
    np.testing.assert_array_equal(aggregate_influence([rec]).scores, np.full(4, 0.5))


def _linear_records(b=6, n=4, step=0.34, seed=0):
    rng = np.random.default_rng(seed)
    model = SoftmaxLinear(rng.normal(size=(b, 3)), rng.normal(size=3))
    stats = BandStats(rng.normal(size=b), np.ones(b))
    records = []
    for pid in range(n):
        patch = make_patch(rng.normal(size=(3, 3, b)), label=1 + pid % 3, pid=pid)
        ranking = rank_bands(BandRelevance(rng.normal(size=b), 1, "m", pid))
        records.append(CurveRecord(pid, deletion_curve(model, patch, ranking, stats, step),
                                   insertion_curve(model, patch, ranking, step), "m"))
    return records


def test_linear_model_matches_manual_attribution():
    records = _linear_records()
    b = 6
    total = np.zeros(b)
    for r in records:
        for mode, sign in (("deletion", -1.0), ("insertion", 1.0)):
            curve = getattr(r, mode)
            for g, bands in enumerate(curve.groups):
                delta = sign * (curve.confidences[g + 1] - curve.confidences[g])
                for band in bands:
                    total[band] += delta / len(bands) / 2.0
    total /= len(records)
    expected = (total - total.min()) / (total.max() - total.min())
    got = aggregate_influence(records)
    np.testing.assert_allclose(got.scores, expected, atol=1e-12)
    assert got.patch_count == 4 and got.method == "m"


@settings(max_examples=25, deadline=None)
@given(perm=st.permutations(range(6)), seed=st.integers(0, 1000))
def test_influence_permutation_equivariant(perm, seed):
    perm = np.asarray(perm)
    records = _linear_records(seed=seed)
    relabeled = []
    for r in records:
        def move(c):
            return FaithfulnessCurve(c.fractions, c.confidences, c.mode, c.auc,
                                     tuple(perm[np.asarray(g)] for g in c.groups))
        relabeled.append(CurveRecord(r.patch_id, move(r.deletion), move(r.insertion), r.method))
    base, moved = aggregate_influence(records).scores, aggregate_influence(relabeled).scores
    np.testing.assert_allclose(moved[perm], base, atol=1e-12)


def test_influence_input_checks():
    with pytest.raises(DataError):
        aggregate_influence([])
    a = _record([[0], [1]], [1, 0.5, 0.2], [0, 0.5, 1], method="lrp")
    b = _record([[0], [1]], [1, 0.5, 0.2], [0, 0.5, 1], method="shap")
    with pytest.raises(DataError):
        aggregate_influence([a, b])
    c = _record([[0], [1], [2]], [1, 0.5, 0.2, 0.1], [0, 0.5, 0.8, 1], method="lrp")
    with pytest.raises(DataError):
        aggregate_influence([a, c])


# -- top-k ----------------------------------------------------------------------

def test_top_k_examples():
    s = InfluenceScores(np.array([0.1, 0.9, 0.5]), "m", 1)
    np.testing.assert_array_equal(select_top_k(s, 2).indices, [1, 2])
    scores = np.random.default_rng(0).random(9)
    np.testing.assert_array_equal(select_top_k(scores, 8).indices, np.delete(np.arange(9), scores.argmin()))
    for k in (0, 3):
        with pytest.raises(ConfigError):
            select_top_k(s, k)


def test_default_k_values_on_103_bands():
    wl = np.linspace(0.43, 0.86, 103)
    s = InfluenceScores(np.random.default_rng(1).random(103), "lrp", 10)
    subsets = {k: select_top_k(s, k, wl) for k in (15, 30, 50)}
    assert set(subsets[15].indices) <= set(subsets[30].indices) <= set(subsets[50].indices)
    np.testing.assert_array_equal(subsets[30].wavelengths, wl[subsets[30].indices])


@settings(max_examples=50, deadline=None)
@given(ticks=arrays(np.int64, st.integers(2, 40), elements=st.integers(0, 1000)), data=st.data())
def test_top_k_rank_based_and_nested(ticks, data):
    # a coarse grid keeps both transforms strictly monotone in floating point
    scores = ticks / 1000.0
    b = scores.size
    k1 = data.draw(st.integers(1, b - 1))
    k2 = data.draw(st.integers(k1, b - 1))
    a = select_top_k(scores, k1).indices
    assert set(a) <= set(select_top_k(scores, k2).indices)
    np.testing.assert_array_equal(select_top_k(np.exp(3 * scores) - 7, k1).indices, a)
    np.testing.assert_array_equal(select_top_k(scores ** 3, k1).indices, a)


def test_subset_manifest_round_trip():
    sub = BandSubset([1, 4, 9], [0.45, 0.5, 0.6], "rise")
    d = json.loads(json.dumps(sub.to_manifest()))
    assert d == {"method": "rise", "k": 3, "band_indices": [1, 4, 9], "wavelengths_um": [0.45, 0.5, 0.6]}
    back = BandSubset.from_manifest(d)
    np.testing.assert_array_equal(back.indices, sub.indices)
    with pytest.raises(ConfigError):
        BandSubset([3, 1], [0.5, 0.4])


# -- retraining -----------------------------------------------------------------

@pytest.fixture(scope="module")
def small_split():
    spec = SyntheticSpec(height=24, width=24, bands=12, classes=3, informative_bands=(2, 3, 7, 9), snr=1.0)
    cube, gt = generate_synthetic_cube(spec)
    tr, acc, _ = split_patches(extract_patches(cube, gt, (3, 3)), SplitSpec(0.3, seed=1))
    return spec, tr, acc


def test_identity_subset_single_run_equals_baseline(small_split):
    _, tr, acc = small_split
    net_spec = preset_spec("shallow", (3, 3, 12), 3, seed=5)
    cfg = TrainConfig(epochs=5, seed=2)
    row = retrain_reduced(net_spec, np.arange(12), tr, acc, cfg, runs=1, method="full")
    net, _ = train(init_network(net_spec), tr, cfg)
    assert row.accuracies == [evaluate_accuracy(net, acc)]
    assert (row.k, row.runs, row.acc_std) == (12, 1, 0.0)


def test_retrain_runs_and_seeds(small_split):
    spec, tr, acc = small_split
    net_spec = preset_spec("shallow", (3, 3, 12), 3, seed=0)
    cfg = TrainConfig(epochs=3)
    row = retrain_reduced(net_spec, BandSubset([2, 3, 7, 9], np.zeros(4), "planted"), tr, acc, cfg, runs=3)
    again = retrain_reduced(net_spec, BandSubset([2, 3, 7, 9], np.zeros(4), "planted"), tr, acc, cfg, runs=3)
    assert row.method == "planted" and row.k == 4 and row.runs == 3
    assert row.accuracies == again.accuracies
    assert row.acc_std == pytest.approx(np.std(row.accuracies, ddof=1))
    with pytest.raises(ConfigError):
        retrain_reduced(net_spec, [0, 1], tr, acc, cfg, runs=0)


def test_planted_subset_is_sufficient():
    spec = SyntheticSpec()
    cube, gt = generate_synthetic_cube(spec)
    tr, acc, _ = split_patches(extract_patches(cube, gt, (3, 3)), SplitSpec(0.3, seed=1))
    net_spec = preset_spec("shallow", (3, 3, 40), 4, seed=2)
    cfg = TrainConfig(seed=3)
    full = retrain_reduced(net_spec, np.arange(40), tr, acc, cfg, runs=1, method="full")
    planted = retrain_reduced(net_spec, list(spec.informative_bands), tr, acc, cfg, runs=1, method="planted")
    assert full.acc_mean > 90.0
    assert abs(full.acc_mean - planted.acc_mean) < 3.0


def test_report_gap_and_csv(tmp_path):
    rows = [ComparisonRow("full", 40, [90.0, 92.0]), ComparisonRow("lrp", 12, [89.0, 90.0, 88.0])]
    report = compare_report(rows)
    d = report.to_dict()["rows"]
    assert d[0]["gap_vs_full"] == 0.0 and d[1]["gap_vs_full"] == pytest.approx(2.0)
    report.write_csv(tmp_path / "r.csv")
    with open(tmp_path / "r.csv") as f:
        lines = list(csv.reader(f))
    assert lines[0] == ["model", "dataset", "method", "k", "acc_mean", "acc_std", "runs"]
    assert lines[2][:4] == ["cnn", "synthetic", "lrp", "12"] and float(lines[2][4]) == 89.0
    single = compare_report([ComparisonRow("lrp", 12, [80.0])])
    assert len(single.rows) == 1 and single.to_dict()["rows"][0]["gap_vs_full"] is None
    with pytest.raises(DataError):
        compare_report([])
