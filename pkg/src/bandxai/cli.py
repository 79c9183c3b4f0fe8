"""Command-line entry point: ``bandxai <stage> [--config PATH] [--seed N] [--out DIR] [--threads N]``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import contextlib
import json
import logging
import sys
from pathlib import Path

from bandxai import pipeline
from bandxai.config import load_config
from bandxai.errors import ConfigError, DataError, NumericalError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERICAL = 0, 2, 3, 4


def _u64(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _positive(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="pipeline config JSON (defaults apply when omitted)")
    common.add_argument("--seed", type=_u64, help="override the global seed")
    common.add_argument("--out", help="override the output directory")
    common.add_argument("--threads", type=_positive, help="cap BLAS/OpenMP threads")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    parser = argparse.ArgumentParser(prog="bandxai", description="Explainability-driven spectral band selection.")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write the synthetic cube and labels")
    sub.add_parser("train", parents=[common], help="train the patch classifier")
    for name, text in (("explain", "band relevance CSVs"), ("evaluate", "faithfulness curves and summary"),
                       ("select", "influence, subsets and retraining report")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--methods", nargs="+", help="subset of the enabled methods")
    p = sub.add_parser("kde", parents=[common], help="wavelength densities of subset manifests")
    p.add_argument("--manifests", help="directory of subset manifests (default: <out>/select/subsets)")
    sub.add_parser("report", parents=[common], help="collect stage outputs into report.json")
    sub.add_parser("run", parents=[common], help="run every stage in order")
    return parser


def _dispatch(args, cfg):
    cmd = args.command
    if cmd == "synth":
        return str(pipeline.run_synth(cfg))
    if cmd == "train":
        return pipeline.run_train(cfg)
    if cmd == "explain":
        return {m: str(p) for m, p in pipeline.run_explain(cfg, args.methods).items()}
    if cmd == "evaluate":
        return pipeline.run_evaluate(cfg, args.methods)
    if cmd == "select":
        return pipeline.run_select(cfg, args.methods)["recovery"]
    if cmd == "kde":
        return pipeline.run_kde(cfg, Path(args.manifests) if args.manifests else None)
    if cmd == "report":
        pipeline.run_report(cfg)
        return {"report": str(pipeline.output_path(cfg) / "report.json")}
    return pipeline.run_all(cfg)["train"]


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, seed=args.seed, out=args.out)
        limits = contextlib.nullcontext()
        if args.threads is not None:
            from threadpoolctl import threadpool_limits
            limits = threadpool_limits(limits=args.threads)
        with limits:
            result = _dispatch(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(json.dumps(pipeline.clean_json(result), indent=2))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
