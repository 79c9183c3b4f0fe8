"""Multi-seed benchmark on the synthetic scene.

Runs the full pipeline once per seed and prints, per method, the faithfulness
summary and the number of planted bands recovered by top-8 selection.

    python3 scripts/run_benchmark.py --seeds 0 1 2 3 4 --out runs/bench
    python3 scripts/run_benchmark.py --config scripts/example_config.json --retrain
"""

import argparse
import dataclasses
import json
import statistics
import time
from pathlib import Path

from bandxai import pipeline
from bandxai.config import load_config


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default=None)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--out", default="runs/bench")
    ap.add_argument("--retrain", action="store_true", help="also run the reduced-band retraining")
    args = ap.parse_args()

    rows = []
    for seed in args.seeds:
        cfg = load_config(args.config, seed=seed, out=str(Path(args.out) / f"seed{seed}"))
        cfg = dataclasses.replace(cfg, select=dataclasses.replace(cfg.select, retrain=args.retrain))
        t = time.perf_counter()
        report = pipeline.run_all(cfg)
        for method, s in report["faithfulness"]["methods"].items():
            rows.append({"seed": seed, "method": method,
                         "recovered": report["recovery"][method].get("top_planted_recovered"),
                         **{k: s[k] for k in ("deletion_auc_mean", "random_deletion_auc", "deletion_p_value",
                                              "insertion_auc_mean", "random_insertion_auc", "insertion_p_value")}})
        print(f"seed {seed}: test accuracy {report['train']['test_accuracy']:.2f}% "
              f"({time.perf_counter() - t:.0f} s)", flush=True)

    print(f"\n{'seed':>4} {'method':>6} {'rec':>3} {'del':>6} {'rand':>6} {'p':>8} {'ins':>6} {'rand':>6} {'p':>8}")
    for r in rows:
        p_del = r["deletion_p_value"] if r["deletion_p_value"] is not None else float("nan")
        p_ins = r["insertion_p_value"] if r["insertion_p_value"] is not None else float("nan")
        print(f"{r['seed']:>4} {r['method']:>6} {r['recovered']!s:>3} {r['deletion_auc_mean']:6.3f} "
              f"{r['random_deletion_auc']:6.3f} {p_del:8.1e} {r['insertion_auc_mean']:6.3f} "
              f"{r['random_insertion_auc']:6.3f} {p_ins:8.1e}")
    medians = {}
    for m in sorted({r["method"] for r in rows}):
        counts = [r["recovered"] for r in rows if r["method"] == m and r["recovered"] is not None]
        if counts:
            medians[m] = statistics.median(counts)
    print("\nmedian planted bands recovered:", json.dumps(medians))


if __name__ == "__main__":
    main()
