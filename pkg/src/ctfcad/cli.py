"""Command-line interface.

One subcommand per pipeline stage plus `run` for the whole cascade and
`retrieve` for the counterpart-retrieval protocol. All subcommands take
`--config <path>` (JSON), `--output <dir>`, and an optional `--seed <u64>`
that overrides the config seed. Exit codes: 0 success, 2 config error,
3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys

from ctfcad import pipeline
from ctfcad.errors import ConfigError, DataError, NumericalError

_STAGE_NAMES = [name for name, _ in pipeline._STAGES]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctfcad",
        description="Coarse-to-fine classification cascade: staged or end-to-end runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="JSON pipeline configuration")
        p.add_argument("--output", required=True, help="artifact output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    run = sub.add_parser("run", help="execute every stage in order")
    add_common(run)
    for name in _STAGE_NAMES:
        p = sub.add_parser(name, help=f"run only the {name} stage")
        add_common(p)
    retr = sub.add_parser("retrieve", help="counterpart retrieval in embedded space")
    add_common(retr)
    retr.add_argument("--query", required=True, help="query-view dataset CSV")
    retr.add_argument("--gallery", required=True, help="gallery-view dataset CSV")
    retr.add_argument("--max-k", type=int, default=10, help="largest neighborhood to report")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = pipeline.load_config(args.config, seed_override=args.seed)
        os.makedirs(args.output, exist_ok=True)
        if args.command == "run":
            pipeline.run_pipeline(cfg, args.output)
        elif args.command == "retrieve":
            pipeline.stage_retrieve(cfg, args.output, args.query, args.gallery, args.max_k)
        else:
            stage = dict(pipeline._STAGES)[args.command]
            stage(cfg, args.output)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (DataError, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
