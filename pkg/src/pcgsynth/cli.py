"""Command-line entry point: pipeline stages as subcommands.

Exit codes: 0 success, 2 configuration error, 3 data/dependency error,
4 training diverged.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .errors import (
    ConfigError,
    DegenerateSignalError,
    FormatError,
    InsufficientDataError,
    PcgError,
    StageDependencyError,
    TrainingDivergedError,
)
from .pipeline import MODEL_NAMES, load_config
from . import pipeline

log = logging.getLogger("pcgsynth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pcgsynth",
        description="Screen, segment, and synthesize phonocardiogram recordings.",
    )
    parser.add_argument("--config", type=Path, help="INI pipeline configuration")
    parser.add_argument("--seed", type=int, help="override the global seed")
    parser.add_argument("--workdir", type=Path,
                        help="artifact directory (PCG_WORKDIR env var also works)")
    parser.add_argument("--profile", choices=("paper", "desk"),
                        help="hyperparameter preset")
    parser.add_argument("--force", action="store_true",
                        help="ignore config-hash mismatches on evaluate")
    parser.add_argument("-v", "--verbose", action="store_true")

    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("fixture", help="write a synthetic WAV corpus and manifest")
    sub.add_parser("ingest", help="load manifest recordings, trim edges, index them")
    sub.add_parser("qc", help="run the three quality criteria per recording")
    sub.add_parser("preprocess", help="band-pass, standardize, downsample")
    sub.add_parser("segment", help="DWT, peak detection, and beat windowing")

    train = sub.add_parser("train", help="train a generative model on segments")
    train.add_argument("--model", required=True, choices=MODEL_NAMES)

    gen = sub.add_parser("generate", help="sample synthetic segments")
    gen.add_argument("--model", required=True, choices=MODEL_NAMES)
    gen.add_argument("-n", type=int, default=100, dest="count",
                     help="number of rows to generate")

    sub.add_parser("evaluate", help="score synthetic vs real segments")
    sub.add_parser("forecast-eval", help="wavenet holdout forecasting metrics")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        workdir = args.workdir or os.environ.get("PCG_WORKDIR")
        cfg = load_config(args.config, profile=args.profile, seed=args.seed,
                          workdir=workdir)
        cfg.workdir.mkdir(parents=True, exist_ok=True)
        if args.command == "fixture":
            manifest = pipeline.stage_fixture(cfg)
            print(manifest)
        elif args.command == "ingest":
            if cfg.manifest is None:
                default_manifest = cfg.workdir / "fixture" / "manifest.csv"
                if default_manifest.exists():
                    cfg = pipeline.replace(cfg, manifest=default_manifest)
            print(pipeline.stage_ingest(cfg))
        elif args.command == "qc":
            print(pipeline.stage_qc(cfg))
        elif args.command == "preprocess":
            print(pipeline.stage_preprocess(cfg))
        elif args.command == "segment":
            print(pipeline.stage_segment(cfg))
        elif args.command == "train":
            print(pipeline.stage_train(cfg, args.model))
        elif args.command == "generate":
            print(pipeline.stage_generate(cfg, args.model, args.count))
        elif args.command == "evaluate":
            print(pipeline.stage_evaluate(cfg, force=args.force))
        elif args.command == "forecast-eval":
            print(pipeline.stage_forecast_eval(cfg))
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (StageDependencyError, FormatError, InsufficientDataError,
            DegenerateSignalError) as exc:
        log.error("data error: %s", exc)
        return 3
    except TrainingDivergedError as exc:
        log.error("training diverged: %s", exc)
        return 4
    except PcgError as exc:
        log.error("%s", exc)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
