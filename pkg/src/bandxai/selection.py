"""Influence scores from deletion/insertion curves, top-k band subsets, retraining."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from bandxai.classifier import (NetworkSpec, TrainConfig, evaluate_accuracy, init_network,
                                rebuild_for_bands, train)
from bandxai.errors import ConfigError, DataError
from bandxai.faithfulness import FaithfulnessCurve
from bandxai.hypercube import PatchSet, restrict_bands


@dataclass(frozen=True)
class InfluenceScores:
    scores: np.ndarray
    method: str
    patch_count: int


@dataclass(frozen=True)
class BandSubset:
    indices: np.ndarray
    wavelengths: np.ndarray
    method: str = ""

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).ravel()
        if idx.size > 1 and not np.all(np.diff(idx) > 0):
            raise ConfigError("subset indices must be strictly increasing")
        object.__setattr__(self, "indices", idx)
        object.__setattr__(self, "wavelengths", np.asarray(self.wavelengths, dtype=np.float64).ravel())

    @property
    def size(self) -> int:
        return self.indices.size

    def to_manifest(self) -> dict:
        return {"method": self.method, "k": self.size,
                "band_indices": [int(i) for i in self.indices],
                "wavelengths_um": [float(w) for w in self.wavelengths]}

    @classmethod
    def from_manifest(cls, d: dict) -> "BandSubset":
        return cls(d["band_indices"], d["wavelengths_um"], d.get("method", ""))


@dataclass(frozen=True)
class CurveRecord:
    """Deletion and insertion curves of one patch under one method's ranking."""

    patch_id: int
    deletion: FaithfulnessCurve
    insertion: FaithfulnessCurve
    method: str = ""


def _group_shares(curve: FaithfulnessCurve, b: int, sign: float) -> np.ndarray:
    share = np.zeros(b)
    deltas = sign * np.diff(curve.confidences)
    for bands, delta in zip(curve.groups, deltas):
        share[np.asarray(bands)] += delta / len(bands)
    return share


def minmax(scores: np.ndarray) -> np.ndarray:
    """Min-max to [0, 1]; a constant vector maps to 0.5 everywhere."""
    lo, hi = scores.min(), scores.max()
    if hi > lo:
        return (scores - lo) / (hi - lo)
    return np.full_like(scores, 0.5)


def aggregate_influence(records: list[CurveRecord]) -> InfluenceScores:
    """Per-band influence from the confidence changes of each perturbation group.

    A group's deletion drop (or insertion gain) is split equally among its
    bands. Each band's influence is the mean over patches of the average of
    its deletion and insertion shares, min-max normalized.
    """
    if not records:
        raise DataError("no curve records to aggregate")
    b = sum(len(g) for g in records[0].deletion.groups)
    methods = {r.method for r in records}
    if len(methods) > 1:
        raise DataError(f"records mix methods {sorted(methods)}")
    total = np.zeros(b)
    for r in records:
        nb = sum(len(g) for g in r.deletion.groups)
        if nb != b or sum(len(g) for g in r.insertion.groups) != b:
            raise DataError("records disagree on band count")
        total += (_group_shares(r.deletion, b, -1.0) + _group_shares(r.insertion, b, 1.0)) / 2.0
    return InfluenceScores(minmax(total / len(records)), records[0].method, len(records))


def select_top_k(scores: InfluenceScores, k: int, wavelengths=None) -> BandSubset:
    """The ``k`` highest-scoring bands (ties to the lower index), sorted ascending."""
    s = np.asarray(getattr(scores, "scores", scores), dtype=np.float64)
    b = s.size
    if not 1 <= k < b:
        raise ConfigError(f"k must satisfy 1 <= k < {b}, got {k}")
    order = np.lexsort((np.arange(b), -s))
    idx = np.sort(order[:k])
    wl = np.asarray(wavelengths, dtype=np.float64)[idx] if wavelengths is not None else np.full(k, np.nan)
    return BandSubset(idx, wl, getattr(scores, "method", ""))


@dataclass
class ComparisonRow:
    method: str
    k: int
    accuracies: list[float]
    model: str = "cnn"
    dataset: str = "synthetic"

    @property
    def runs(self) -> int:
        return len(self.accuracies)

    @property
    def acc_mean(self) -> float:
        return float(np.mean(self.accuracies))

    @property
    def acc_std(self) -> float:
        return float(np.std(self.accuracies, ddof=1)) if self.runs > 1 else 0.0


@dataclass
class ComparisonReport:
    rows: list[ComparisonRow]
    gaps: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"rows": [
            {"model": r.model, "dataset": r.dataset, "method": r.method, "k": r.k,
             "acc_mean": r.acc_mean, "acc_std": r.acc_std, "runs": r.runs,
             "accuracies": list(map(float, r.accuracies)),
             "gap_vs_full": self.gaps.get((r.model, r.dataset, r.method, r.k))}
            for r in self.rows]}

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(["model", "dataset", "method", "k", "acc_mean", "acc_std", "runs"])
            for r in self.rows:
                w.writerow([r.model, r.dataset, r.method, r.k, repr(r.acc_mean), repr(r.acc_std), r.runs])

    def write_json(self, path) -> None:
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)


def retrain_reduced(spec: NetworkSpec, subset, train_set: PatchSet, test_set: PatchSet,
                    cfg: TrainConfig, runs: int = 5, method: str | None = None,
                    model: str = "cnn", dataset: str = "synthetic") -> ComparisonRow:
    """Restrict, rebuild, train and evaluate ``runs`` times; run ``r`` uses
    network seed ``spec.seed + r`` and shuffle seed ``cfg.seed + r``."""
    if runs < 1:
        raise ConfigError("runs must be >= 1")
    idx = getattr(subset, "indices", subset)
    tr, te = restrict_bands(train_set, idx), restrict_bands(test_set, idx)
    reduced = rebuild_for_bands(spec, tr.band_count)
    accs = []
    for r in range(runs):
        run_spec = NetworkSpec(reduced.input_dims, reduced.layers, reduced.class_count, reduced.seed + r)
        run_cfg = TrainConfig(**{**cfg.__dict__, "seed": cfg.seed + r})
        net, _ = train(init_network(run_spec), tr, run_cfg)
        accs.append(evaluate_accuracy(net, te))
    label = method if method is not None else getattr(subset, "method", "") or "subset"
    return ComparisonRow(label, tr.band_count, accs, model, dataset)


def compare_report(rows: list[ComparisonRow]) -> ComparisonReport:
    """Collect rows; each row gets its accuracy gap to the ``full`` row of the same model/dataset."""
    if not rows:
        raise DataError("no rows to report")
    full = {(r.model, r.dataset): r.acc_mean for r in rows if r.method == "full"}
    gaps = {}
    for r in rows:
        ref = full.get((r.model, r.dataset))
        gaps[(r.model, r.dataset, r.method, r.k)] = None if ref is None else ref - r.acc_mean
    return ComparisonReport(list(rows), gaps)
