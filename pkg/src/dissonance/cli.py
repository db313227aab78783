"""Command line entry point: ``dissonance <kind> --config cfg.json [--out DIR]``."""

from __future__ import annotations

import argparse
import logging
import sys

from .config import KINDS, bundled_config_path, load_config
from .errors import ConfigInvalid, DissonanceError
from .runner import SUMMARY_HEADERS, gate_status, run

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_GATED = 0, 2, 3, 4


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True,
                        help="experiment JSON; 'bundled:<name>' picks a shipped example")
    common.add_argument("--out", help="directory for result.json and artifacts")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--threads", type=int, default=1, help="worker threads for sampling")
    common.add_argument("--verbose", action="store_true", help="log progress and print the CSV header")
    common.add_argument("--strict", action="store_true", help="exit 4 on Inconclusive verdicts")
    parser = argparse.ArgumentParser(prog="dissonance", description=__doc__)
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sub.add_parser(kind, parents=[common], help=f"run a {kind} experiment")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    path = args.config
    if path.startswith("bundled:"):
        path = bundled_config_path(path.split(":", 1)[1])
    try:
        cfg = load_config(path)
        if cfg["kind"] != args.kind:
            raise ConfigInvalid(f"config kind {cfg['kind']!r} does not match subcommand {args.kind!r}", "$.kind")
        record = run(cfg, args.out, seed=args.seed, threads=args.threads)
    except ConfigInvalid as exc:
        print(f"config error at {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DissonanceError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    if args.verbose:
        print(SUMMARY_HEADERS[record.kind])
    print(record.summary)
    if args.strict and gate_status(record) == "Inconclusive":
        return EXIT_GATED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
