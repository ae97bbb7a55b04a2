"""Command-line entry point.

Subcommands: rank-sweep, missing-sweep, overlap-sim, blogs, complete,
bound-report, convert-raster. Exit codes: 0 success, 2 configuration
error, 3 data error. Logs go to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ConfigError, DataError, GraphPropError, InfeasibleFraction
from .harness import (
    EXPERIMENT_KINDS,
    config_from_dict,
    convert_raster,
    load_config,
    run_blogs,
    run_bound_report,
    run_complete,
    run_missing_sweep,
    run_overlap_sim,
    run_rank_sweep,
)

log = logging.getLogger("graphprop")

_RUNNERS = {
    "rank-sweep": run_rank_sweep,
    "missing-sweep": run_missing_sweep,
    "overlap-sim": run_overlap_sim,
    "blogs": run_blogs,
    "complete": run_complete,
    "bound-report": run_bound_report,
}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="JSON config file")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--out-dir", help="output directory (overrides config)")
    parser.add_argument("--workers", type=int, help="parallel worker count")
    parser.add_argument("--full-scale", action="store_true", default=None,
                        help="switch to the full-scale preset dimensions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="graphprop",
        description="Multi-acquisition tensor completion experiments",
    )
    parser.add_argument("--log-level", default="INFO",
                        choices=("DEBUG", "INFO", "WARNING", "ERROR"))
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, help=f"run the {kind} experiment")
        _add_common(p)
        if kind == "blogs":
            p.add_argument("--graph", help="edge-list file ('# n=<N>' header)")
            p.add_argument("--labels", help="label file (one 0/1 per line)")
        if kind == "complete":
            p.add_argument("--tensor", action="append", default=None,
                           help="input tensor file (repeatable, one per acquisition)")
            p.add_argument("--observed", action="append", default=None,
                           help="observation-set JSON file (repeatable)")
    conv = sub.add_parser("convert-raster",
                          help="convert a flat binary raster into the tensor format")
    conv.add_argument("input", type=Path, help="band-interleaved-by-pixel binary")
    conv.add_argument("sidecar", type=Path, help="JSON sidecar (height/width/bands/dtype)")
    conv.add_argument("output", type=Path, help="output tensor file")
    return parser


def _build_config(args: argparse.Namespace):
    overrides = {
        "kind": args.command,
        "seed": args.seed,
        "out_dir": getattr(args, "out_dir", None),
        "workers": args.workers,
        "full_scale": args.full_scale,
    }
    if args.command == "blogs":
        overrides["graph_file"] = args.graph
        overrides["labels_file"] = args.labels
    if args.command == "complete":
        overrides["inputs"] = tuple(args.tensor) if args.tensor else None
        overrides["observation_files"] = tuple(args.observed) if args.observed else None
    if args.config is not None:
        return load_config(args.config, **overrides)
    return config_from_dict({}, **overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        if args.command == "convert-raster":
            tensor = convert_raster(args.input, args.sidecar, args.output)
            log.info("wrote %s with shape %s", args.output, tensor.shape)
            return 0
        cfg = _build_config(args)
    except (ConfigError, InfeasibleFraction) as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (DataError, OSError) as exc:
        log.error("data error: %s", exc)
        return 3
    try:
        _RUNNERS[cfg.kind](cfg)
    except (ConfigError, InfeasibleFraction) as exc:
        log.error("configuration error: %s", exc)
        return 2
    except (DataError, OSError) as exc:
        log.error("data error: %s", exc)
        return 3
    except GraphPropError as exc:
        log.error("%s", exc)
        return 1
    log.info("results written to %s", cfg.out_dir)
    return 0


if __name__ == "__main__":
    sys.exit(main())
