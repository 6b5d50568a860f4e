"""``datalens`` command-line entry point."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from datalens import __version__
from datalens.errors import ConfigError, DatalensError
from datalens.harness.grid import Cell, load_config
from datalens.cli import stages
from datalens.cli.workspace import Workspace

log = logging.getLogger("datalens")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        _emit_error("usage_error", "UsageError", message)
        sys.exit(2)


def _emit_error(code: str, kind: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": {"code": code, "type": kind, "message": message}}) + "\n")


def _common(p: argparse.ArgumentParser, cell: bool = True) -> None:
    p.add_argument("--config", type=Path, help="experiment grid config (JSON)")
    p.add_argument("--out", type=Path, help="output directory (default: $DATALENS_OUT)")
    p.add_argument("--threads", type=int, default=1, help="cells processed in parallel")
    if cell:
        p.add_argument("--dataset", help="dataset name from the config (default: first)")
        p.add_argument("--seed", type=int, help="cell seed (default: first in the config)")
        p.add_argument("--flip-rate", type=float, help="flip rate (default: first in the config)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="datalens", description="Rank training samples by suspicion of "
                     "being mislabeled and evaluate the rankings.")
    parser.add_argument("--version", action="version", version=f"datalens {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("generate", help="build the clean dataset for one (dataset, seed)")
    _common(p)
    p = sub.add_parser("flip", help="inject label flips into a generated dataset")
    _common(p)
    p = sub.add_parser("train", help="train the classifier on the flipped dataset")
    _common(p)
    p = sub.add_parser("score", help="compute per-sample scores")
    _common(p)
    p.add_argument("--method", help="scoring method (default: every method in the config)")
    p = sub.add_parser("evaluate", help="detection rates, curves and score distributions")
    _common(p)
    p.add_argument("--method", help="restrict to one scored method")
    p.add_argument("--ratio", type=float, action="append",
                   help="inspection ratio (repeatable; default: the config's ratios)")
    p = sub.add_parser("combine", help="evaluate combined rankings")
    _common(p)
    p.add_argument("--method", help="combination preset or label such as classwise_low+loss")
    p.add_argument("--ratio", type=float, action="append", help="inspection ratio (repeatable)")
    p = sub.add_parser("experiment", help="correction / deletion retraining experiments")
    _common(p)
    p = sub.add_parser("report", help="aggregate tables and render SVG charts")
    _common(p, cell=False)
    p = sub.add_parser("run", help="every stage for every cell, then the report")
    _common(p, cell=False)
    return parser


def _out_dir(args) -> Path:
    out = args.out or os.environ.get("DATALENS_OUT")
    if not out:
        raise ConfigError("no output directory: pass --out or set DATALENS_OUT")
    return Path(out)


def _cell(ws: Workspace, args) -> Cell:
    cfg = ws.config
    dataset = args.dataset or cfg.datasets[0].name
    cfg.dataset(dataset)
    seed = cfg.seeds[0] if args.seed is None else args.seed
    rate = cfg.flip_rates[0] if args.flip_rate is None else args.flip_rate
    if rate not in cfg.flip_rates:
        raise ConfigError(f"flip rate {rate} is not in the config's flip_rates {cfg.flip_rates}")
    if seed not in cfg.seeds:
        raise ConfigError(f"seed {seed} is not in the config's seeds {cfg.seeds}")
    return Cell(dataset, rate, seed)


def dispatch(args) -> list[Path]:
    if args.threads < 1:
        raise ConfigError("--threads must be >= 1")
    # the config is validated in full before any stage starts
    config = load_config(args.config) if args.config else None
    ws = Workspace.open(_out_dir(args), config)
    try:
        if args.command == "run":
            return stages.run_all(ws, args.threads)
        if args.command == "report":
            return stages.report(ws)
        cell = _cell(ws, args)
        if args.command == "generate":
            return [stages.generate(ws, cell.dataset, cell.seed)]
        if args.command == "flip":
            return [stages.flip(ws, cell)]
        if args.command == "train":
            return [stages.train_stage(ws, cell)]
        if args.command == "score":
            return stages.score(ws, cell, [args.method] if args.method else None)
        if args.command == "evaluate":
            return [stages.evaluate(ws, cell, args.ratio, args.method)]
        if args.command == "combine":
            return [stages.combine_stage(ws, cell, args.ratio, args.method)]
        if args.command == "experiment":
            return [stages.experiment(ws, cell)]
        raise ConfigError(f"unknown command {args.command}")
    finally:
        ws.save()


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        written = dispatch(args)
    except DatalensError as e:
        _emit_error(e.code, type(e).__name__, str(e))
        return 1
    except KeyError as e:
        _emit_error("unknown_key", "KeyError", str(e))
        return 1
    for p in written:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
