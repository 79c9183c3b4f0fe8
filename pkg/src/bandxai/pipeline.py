"""Pipeline stages. Each reads and writes only declared files under the output directory.

Layout::

    config.json
    data/      synthetic.hdr.json, synthetic.bsq, synthetic.labels.u16, synthetic_spec.json
    model/     model.json, model.bin
    train/     history.csv, split.json, metrics.json
    explain/   relevance_<method>.csv
    evaluate/  curves.csv, faithfulness.json
    select/    influence_<method>.json, subsets/<method>_k<k>.json, report.csv, report.json, recovery.json
    kde/       <method>_k<k>.csv, summary.json
    report.json

Outputs of a stage are written to a scratch directory first and moved into
place with ``os.replace`` once the whole stage has succeeded.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime
import io
import json
import logging
import math
import os
import shutil
import tempfile
from collections import defaultdict
from contextlib import contextmanager
from pathlib import Path

import numpy as np
from scipy import stats as sstats

from bandxai.classifier import (evaluate_accuracy, init_network, load_model, preset_spec, save_model,
                                train, write_history)
from bandxai.config import PipelineConfig
from bandxai.errors import ConfigError, DataError
from bandxai.explain import BandRelevance, explain_band_relevance
from bandxai.faithfulness import (FaithfulnessCurve, average_drop, band_groups, deletion_curve,
                                  insertion_curve, random_baseline_curves, rank_bands)
from bandxai.hypercube import (GroundTruth, HyperCube, PatchSet, extract_patches,
                               generate_synthetic_cube, load_cube, load_ground_truth, split_indices,
                               write_cube, write_labels)
from bandxai.kde import kde_eval, write_kde_csv
from bandxai.selection import (BandSubset, CurveRecord, aggregate_influence, compare_report,
                               retrain_reduced, select_top_k)

log = logging.getLogger("bandxai")

STAGES = ("synth", "train", "explain", "evaluate", "select", "kde", "report")
STAGE_DIRS = ("data", "model", "train", "explain", "evaluate", "select/subsets", "kde")


# -- file helpers ------------------------------------------------------------------

@contextmanager
def staged(out: Path):
    """Yield a scratch directory; on success move every file in it to ``out``."""
    out.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".stage-", dir=out))
    for sub in STAGE_DIRS:
        (tmp / sub).mkdir(parents=True)
    try:
        yield tmp
        for src in sorted(p for p in tmp.rglob("*") if p.is_file()):
            dst = out / src.relative_to(tmp)
            dst.parent.mkdir(parents=True, exist_ok=True)
            os.replace(src, dst)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def clean_json(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): clean_json(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [clean_json(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return clean_json(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(clean_json(obj), indent=2, allow_nan=False) + "\n")


def read_json(path: Path):
    if not path.is_file():
        raise DataError(f"required file missing: {path}")
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc}") from exc


def write_rows(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue())


def read_rows(path: Path, header) -> list[dict]:
    if not path.is_file():
        raise DataError(f"required file missing: {path}")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != list(header):
            raise DataError(f"{path} has columns {reader.fieldnames}, expected {list(header)}")
        return list(reader)


# -- dataset -----------------------------------------------------------------------

def output_path(cfg: PipelineConfig) -> Path:
    return Path(cfg.output_dir)


def load_dataset(cfg: PipelineConfig) -> tuple[HyperCube, GroundTruth]:
    if cfg.dataset.header is None:
        header = output_path(cfg) / "data" / "synthetic.hdr.json"
        labels = output_path(cfg) / "data" / "synthetic.labels.u16"
        if not header.is_file():
            raise DataError(f"{header} not found; run the synth stage first")
        class_count = cfg.synthetic_spec().classes
    else:
        header, labels, class_count = Path(cfg.dataset.header), Path(cfg.dataset.labels), cfg.dataset.class_count
    cube = load_cube(header)
    gt = load_ground_truth(labels, cube.height, cube.width, class_count)
    return cube, gt


def load_patches(cfg: PipelineConfig) -> PatchSet:
    cube, gt = load_dataset(cfg)
    return extract_patches(cube, gt, tuple(cfg.dataset.patch_dims))


def load_split(cfg: PipelineConfig, ps: PatchSet) -> dict[str, PatchSet]:
    d = read_json(output_path(cfg) / "train" / "split.json")
    parts = {}
    for name in ("train", "test_accuracy", "test_explain"):
        idx = np.asarray(d.get(name, []), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= len(ps)):
            raise DataError(f"split manifest {name} indexes outside the {len(ps)} patches")
        parts[name] = ps.subset(idx)
    return parts


def _explain_sample(cfg: PipelineConfig, expl: PatchSet) -> PatchSet:
    n = len(expl)
    if n == 0:
        raise DataError("explanation split is empty")
    m = min(n, cfg.evaluate.patch_sample)
    rng = np.random.default_rng(cfg.seed_for("sample"))
    return expl.subset(np.sort(rng.choice(n, size=m, replace=False)))


# -- stages ------------------------------------------------------------------------

def run_synth(cfg: PipelineConfig) -> Path:
    spec = cfg.synthetic_spec()
    if spec is None:
        raise ConfigError("synth needs a synthetic dataset block, not cube paths")
    cube, gt = generate_synthetic_cube(spec)
    out = output_path(cfg)
    with staged(out) as tmp:
        write_json(tmp / "config.json", cfg.to_dict())
        write_cube(cube, tmp / "data" / "synthetic.hdr.json")
        write_labels(gt, tmp / "data" / "synthetic.labels.u16")
        write_json(tmp / "data" / "synthetic_spec.json", dataclasses.asdict(spec))
    log.info("synth: %dx%dx%d cube, %d classes", cube.height, cube.width, cube.bands, gt.class_count)
    return out / "data"


def run_train(cfg: PipelineConfig) -> dict:
    ps = load_patches(cfg)
    tr_idx, acc_idx, expl_idx = split_indices(ps, cfg.split_spec())
    tr, te = ps.subset(tr_idx), ps.subset(acc_idx)
    spec = preset_spec(cfg.model.preset, (*ps.patch_dims, ps.band_count), ps.class_count, cfg.seed_for("network"))
    net, history = train(init_network(spec), tr, cfg.train_config())
    metrics = {"train_patches": len(tr), "test_accuracy_patches": len(te),
               "test_explain_patches": int(expl_idx.size), "bands": ps.band_count,
               "classes": ps.class_count, "train_accuracy": evaluate_accuracy(net, tr),
               "test_accuracy": evaluate_accuracy(net, te), "epochs_run": len(history)}
    with staged(output_path(cfg)) as tmp:
        write_json(tmp / "config.json", cfg.to_dict())
        save_model(net, tmp / "model")
        write_history(history, tmp / "train" / "history.csv")
        write_json(tmp / "train" / "split.json",
                   {"train": tr_idx, "test_accuracy": acc_idx, "test_explain": expl_idx})
        write_json(tmp / "train" / "metrics.json", metrics)
    log.info("train: test accuracy %.2f%%", metrics["test_accuracy"])
    return metrics


RELEVANCE_HEADER = ("patch_id", "method", "band_index", "score")
CURVE_HEADER = ("patch_id", "method", "mode", "fraction", "confidence")


def _check_methods(cfg: PipelineConfig, methods) -> tuple[str, ...]:
    if methods is None:
        return tuple(cfg.explain.methods)
    disabled = [m for m in methods if m not in cfg.explain.methods]
    if disabled:
        raise ConfigError(f"methods {disabled} are not enabled in the config")
    return tuple(methods)


def run_explain(cfg: PipelineConfig, methods=None) -> dict[str, Path]:
    methods = _check_methods(cfg, methods)
    net = load_model(output_path(cfg) / "model")
    ps = load_patches(cfg)
    if ps.band_count != net.spec.input_dims[2]:
        raise DataError("checkpoint band count does not match the dataset")
    sample = _explain_sample(cfg, load_split(cfg, ps)["test_explain"])
    stats = net.standardizer
    lrp, shap, rise = cfg.lrp_config(), cfg.shap_config(), cfg.rise_config()
    paths = {}
    with staged(output_path(cfg)) as tmp:
        for method in methods:
            rows = []
            for patch in sample:
                rel = explain_band_relevance(net, patch, method, stats, lrp=lrp, shap=shap, rise=rise)
                rows.extend((patch.id, method, j, float(s)) for j, s in enumerate(rel.scores))
            name = f"relevance_{method}.csv"
            write_rows(tmp / "explain" / name, RELEVANCE_HEADER, rows)
            paths[method] = output_path(cfg) / "explain" / name
            log.info("explain: %s over %d patches", method, len(sample))
    return paths


def read_relevance(path: Path, bands: int) -> dict[int, BandRelevance]:
    by_patch = defaultdict(dict)
    method = ""
    for row in read_rows(path, RELEVANCE_HEADER):
        method = row["method"]
        by_patch[int(row["patch_id"])][int(row["band_index"])] = float(row["score"])
    out = {}
    for pid, scores in by_patch.items():
        if sorted(scores) != list(range(bands)):
            raise DataError(f"{path}: patch {pid} has {len(scores)} band scores, network expects {bands}")
        out[pid] = BandRelevance(np.array([scores[j] for j in range(bands)]), 0, method, pid)
    if not out:
        raise DataError(f"{path} contains no relevance rows")
    return out


def _one_sided_p(a, b, alternative: str) -> float:
    a, b = np.asarray(a), np.asarray(b)
    if a.size < 2 or np.allclose(a, b, rtol=0, atol=1e-12):
        return math.nan
    return float(sstats.ttest_rel(a, b, alternative=alternative).pvalue)


def run_evaluate(cfg: PipelineConfig, methods=None) -> dict:
    methods = _check_methods(cfg, methods)
    net = load_model(output_path(cfg) / "model")
    ps = load_patches(cfg)
    b = net.spec.input_dims[2]
    if ps.band_count != b:
        raise DataError("checkpoint band count does not match the dataset")
    relevance = {m: read_relevance(output_path(cfg) / "explain" / f"relevance_{m}.csv", b) for m in methods}
    stats, step = net.standardizer, cfg.evaluate.step
    baselines = {}
    curves, summary = [], {}
    for method in methods:
        dels, inss, drops, rdels, rinss = [], [], [], [], []
        for pid in sorted(relevance[method]):
            if not 0 <= pid < len(ps):
                raise DataError(f"relevance refers to unknown patch {pid}")
            patch, rel = ps[pid], relevance[method][pid]
            if pid not in baselines:
                baselines[pid] = random_baseline_curves(net, patch, stats, step, cfg.evaluate.random_trials,
                                                        cfg.seed_for("random_baseline"))
            ranking = rank_bands(rel)
            d, i = deletion_curve(net, patch, ranking, stats, step), insertion_curve(net, patch, ranking, step)
            for c in (d, i):
                curves.extend((pid, method, c.mode, float(f), float(v)) for f, v in zip(c.fractions, c.confidences))
            dels.append(d.auc)
            inss.append(i.auc)
            drops.append(average_drop(net, patch, rel))
            rdels.append(baselines[pid][0])
            rinss.append(baselines[pid][1])
        drops = np.asarray(drops)
        summary[method] = {
            "patches": len(dels),
            "deletion_auc_mean": float(np.mean(dels)),
            "insertion_auc_mean": float(np.mean(inss)),
            "average_drop_mean": float(np.mean(drops[np.isfinite(drops)])) if np.isfinite(drops).any() else None,
            "random_deletion_auc": float(np.mean(rdels)),
            "random_insertion_auc": float(np.mean(rinss)),
            "deletion_p_value": _one_sided_p(dels, rdels, "less"),
            "insertion_p_value": _one_sided_p(inss, rinss, "greater"),
        }
        log.info("evaluate: %s del %.4f (rand %.4f) ins %.4f (rand %.4f)", method,
                 summary[method]["deletion_auc_mean"], summary[method]["random_deletion_auc"],
                 summary[method]["insertion_auc_mean"], summary[method]["random_insertion_auc"])
    with staged(output_path(cfg)) as tmp:
        write_rows(tmp / "evaluate" / "curves.csv", CURVE_HEADER, curves)
        write_json(tmp / "evaluate" / "faithfulness.json", {"step": step, "methods": summary})
    return summary


def read_curve_records(cfg: PipelineConfig, method: str, bands: int) -> list[CurveRecord]:
    """Rebuild curve records from the relevance (for groups) and curve (for confidences) files."""
    relevance = read_relevance(output_path(cfg) / "explain" / f"relevance_{method}.csv", bands)
    points = defaultdict(list)
    for row in read_rows(output_path(cfg) / "evaluate" / "curves.csv", CURVE_HEADER):
        if row["method"] == method:
            points[(int(row["patch_id"]), row["mode"])].append((float(row["fraction"]), float(row["confidence"])))
    records = []
    for pid in sorted(relevance):
        groups = tuple(band_groups(rank_bands(relevance[pid]), cfg.evaluate.step))
        pair = []
        for mode in ("deletion", "insertion"):
            pts = points.get((pid, mode))
            if pts is None or len(pts) != len(groups) + 1:
                raise DataError(f"curves for patch {pid} ({method}, {mode}) are missing or inconsistent")
            f, c = np.array(pts).T
            pair.append(FaithfulnessCurve(f, c, mode, float("nan"), groups, pid, method))
        records.append(CurveRecord(pid, pair[0], pair[1], method))
    return records


def run_select(cfg: PipelineConfig, methods=None) -> dict:
    methods = _check_methods(cfg, methods)
    net = load_model(output_path(cfg) / "model")
    ps = load_patches(cfg)
    b = ps.band_count
    bad = [k for k in cfg.select.k if not 1 <= k < b]
    if bad:
        raise ConfigError(f"k values {bad} must lie in 1..{b - 1}")
    spec = cfg.synthetic_spec()
    planted = sorted(spec.informative_bands) if spec is not None else None
    influence, subsets = {}, {}
    for method in methods:
        influence[method] = aggregate_influence(read_curve_records(cfg, method, b))
        for k in cfg.select.k:
            subsets[(method, k)] = select_top_k(influence[method], k, ps.wavelengths)
    recovery = {}
    for method in methods:
        ks = sorted(cfg.select.k)
        nested = all(set(subsets[(method, a)].indices) <= set(subsets[(method, c)].indices)
                     for a, c in zip(ks, ks[1:]))
        entry = {"nested": nested}
        if planted is not None:
            top = select_top_k(influence[method], len(planted))
            entry["planted_bands"] = planted
            entry["top_planted_recovered"] = len(set(top.indices) & set(planted))
            entry["recovered_by_k"] = {str(k): len(set(subsets[(method, k)].indices) & set(planted)) for k in ks}
        recovery[method] = entry
    report = None
    if cfg.select.retrain:
        split = load_split(cfg, ps)
        tcfg = cfg.train_config()
        model, dataset = cfg.model.preset, cfg.dataset.name
        rows = [retrain_reduced(net.spec, np.arange(b), split["train"], split["test_accuracy"], tcfg,
                                cfg.select.runs, "full", model, dataset)]
        for method in methods:
            for k in cfg.select.k:
                rows.append(retrain_reduced(net.spec, subsets[(method, k)], split["train"], split["test_accuracy"],
                                            tcfg, cfg.select.runs, method, model, dataset))
                log.info("select: %s k=%d acc %.2f", method, k, rows[-1].acc_mean)
        report = compare_report(rows)
    with staged(output_path(cfg)) as tmp:
        for method in methods:
            write_json(tmp / "select" / f"influence_{method}.json",
                       {"method": method, "patches": influence[method].patch_count,
                        "scores": influence[method].scores})
        for (method, k), sub in subsets.items():
            write_json(tmp / "select" / "subsets" / f"{method}_k{k}.json", sub.to_manifest())
        write_json(tmp / "select" / "recovery.json", recovery)
        if report is not None:
            report.write_csv(tmp / "select" / "report.csv")
            write_json(tmp / "select" / "report.json", report.to_dict())
    return {"recovery": recovery, "report": None if report is None else report.to_dict()}


def read_manifests(directory: Path) -> list[BandSubset]:
    paths = sorted(directory.glob("*.json")) if directory.is_dir() else []
    if not paths:
        raise DataError(f"no subset manifests in {directory}")
    subsets = []
    for p in paths:
        try:
            subsets.append(BandSubset.from_manifest(read_json(p)))
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed manifest {p}: {exc}") from exc
    return subsets


def run_kde(cfg: PipelineConfig, manifests: Path | None = None) -> dict:
    subsets = read_manifests(manifests or output_path(cfg) / "select" / "subsets")
    summary = {}
    with staged(output_path(cfg)) as tmp:
        for sub in subsets:
            curve = kde_eval(sub.wavelengths)
            name = f"{sub.method}_k{sub.size}"
            write_kde_csv(curve, tmp / "kde" / f"{name}.csv")
            summary[name] = {"bandwidth": curve.bandwidth, "integral": curve.integral(),
                             "points": int(curve.grid.size)}
        write_json(tmp / "kde" / "summary.json", summary)
    return summary


def _maybe(path: Path):
    return read_json(path) if path.is_file() else None


def run_report(cfg: PipelineConfig) -> dict:
    out = output_path(cfg)
    report = {
        "generated_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "seed": cfg.seed,
        "train": read_json(out / "train" / "metrics.json"),
        "faithfulness": _maybe(out / "evaluate" / "faithfulness.json"),
        "recovery": _maybe(out / "select" / "recovery.json"),
        "selection": _maybe(out / "select" / "report.json"),
        "kde": _maybe(out / "kde" / "summary.json"),
    }
    with staged(out) as tmp:
        write_json(tmp / "report.json", report)
    return report


def run_all(cfg: PipelineConfig) -> dict:
    if cfg.dataset.header is None:
        run_synth(cfg)
    run_train(cfg)
    run_explain(cfg)
    run_evaluate(cfg)
    run_select(cfg)
    run_kde(cfg)
    return run_report(cfg)
