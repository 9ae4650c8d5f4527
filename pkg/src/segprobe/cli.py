"""Command-line entry point.

One subcommand per pipeline stage plus ``pipeline`` (run everything in
dependency order) and ``make-fixture`` (emit the synthetic demo corpus).
Exit codes: 0 success, 1 configuration/input error, 2 missing dependency
artifact, 3 numerical failure. Set SEGPROBE_LOG=DEBUG|INFO|WARNING for
verbosity.
"""
from __future__ import annotations

import argparse
import sys

from .config import load_config
from .errors import (
    ConfigError,
    MissingArtifactError,
    NumericalError,
    SegprobeError,
)
from .stages import STAGE_ORDER, StageContext, run_pipeline, run_stage
from .synthcorpus import build_fixture_corpus
from .util import log, setup_logging


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", required=True, help="path to the run config JSON")
    p.add_argument("--force", action="store_true",
                   help="rerun even if the stage is already complete")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker processes for stage-internal parallelism")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="segprobe",
        description="Segmental accent analysis over speech representations.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for stage in STAGE_ORDER:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        _add_common(p)
    p = sub.add_parser("pipeline", help="run all stages in dependency order")
    _add_common(p)
    p.add_argument("--stage", default=None,
                   help="run only up to (and including) this stage")
    p = sub.add_parser("make-fixture", help="write the synthetic demo corpus")
    p.add_argument("--dest", required=True)
    p.add_argument("--seed", type=int, default=20240601)
    return parser


def main(argv: list[str] | None = None) -> int:
    setup_logging()
    args = build_parser().parse_args(argv)
    try:
        if args.command == "make-fixture":
            config_path = build_fixture_corpus(args.dest, seed=args.seed)
            log.info("fixture corpus ready; config at %s", config_path)
            print(config_path)
            return 0
        cfg = load_config(args.config, seed_override=args.seed)
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        ctx = StageContext(cfg=cfg, force=args.force, jobs=args.jobs)
        if args.command == "pipeline":
            run_pipeline(ctx, until=args.stage)
        else:
            run_stage(ctx, args.command)
        return 0
    except ConfigError as e:
        log.error("config error: %s", e)
        return 1
    except MissingArtifactError as e:
        log.error("missing dependency: %s", e)
        return 2
    except NumericalError as e:
        log.error("numerical failure: %s", e)
        return 3
    except SegprobeError as e:
        log.error("%s", e)
        return 1


if __name__ == "__main__":
    sys.exit(main())
