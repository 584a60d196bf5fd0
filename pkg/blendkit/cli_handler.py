"""
Command-line entry point.

    blendkit synth-data --out runs/synth --seed 7
    blendkit train-teacher --config configs/synth.yaml
    blendkit cache-teacher --config configs/synth.yaml
    blendkit train-student --config configs/synth.yaml --mode blended --cache runs/synth/teacher.cache.tsv
    blendkit bench --config configs/synth.yaml --checkpoint runs/synth/teacher.ckpt \\
        --checkpoint runs/synth/student-baseline.ckpt

Every command prints one JSON summary line on stdout (``report`` prints the
table instead). Failures print ``error=<category> message=<text>`` on stderr
and exit with 1 (runtime), 2 (usage) or 3 (configuration).
"""

import argparse
import dataclasses
import json
import sys
from typing import Any, Callable, Dict, List, Optional

from blendkit import bench_handler, data_handler, evaluate_handler, train_handler
from blendkit.util.config import RunConfig, load_config
from blendkit.util.errors import BlendkitError, UsageError
from blendkit.util.run_logger import create_logger

logger = create_logger("blendkit")

HANDLERS: Dict[str, Callable[[str, RunConfig, Dict[str, Any]], Dict[str, Any]]] = {}
for _module in (data_handler, train_handler, evaluate_handler, bench_handler):
    for _command in _module.COMMANDS:
        HANDLERS[_command] = _module.handle


class ArgumentParser(argparse.ArgumentParser):
    """argparse that raises UsageError instead of exiting, so the exit code stays in one place."""

    def error(self, message: str):
        raise UsageError(f"{self.prog}: {message}")


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="YAML run config; defaults apply when omitted")
    parser.add_argument("--seed", type=int, help="run seed (overrides the config)")
    parser.add_argument("--out", help="output directory (overrides the config and BLENDKIT_OUT)")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="blendkit", description="Teacher/student text classification with blended losses")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    p = commands.add_parser("synth-data", help="write the synthetic marker dataset")
    _common(p)
    p.add_argument("--n", type=int, help="number of sentences (default 2000)")
    p.add_argument("--vocab-size", type=int, help="noise vocabulary size (default 50)")

    p = commands.add_parser("build-vocab", help="build vocab.txt and labels.tsv from the training file")
    _common(p)

    p = commands.add_parser("train-teacher", help="train the LSTM/BiLSTM teacher")
    _common(p)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--unidirectional", action="store_true", help="single forward LSTM instead of BiLSTM")
    p.add_argument("--name", help="output file stem (default teacher)")

    p = commands.add_parser("cache-teacher", help="cache teacher posteriors for train and test")
    _common(p)
    p.add_argument("--teacher", help="teacher checkpoint (default <out>/teacher.ckpt)")
    p.add_argument("--cache", help="cache file to write (default <out>/teacher.cache.tsv)")

    p = commands.add_parser("train-student", help="train the CNN student")
    _common(p)
    p.add_argument("--mode", choices=("baseline", "blended"))
    p.add_argument("--cache", help="teacher cache; required in blended mode")
    p.add_argument("--teacher", help="teacher checkpoint the cache came from (default <out>/teacher.ckpt)")
    p.add_argument("--lambda", dest="lambda_", type=float, help="soft-loss weight")
    p.add_argument("--temperature", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--name", help="output file stem (default student-<mode>)")

    p = commands.add_parser("evaluate", help="score one checkpoint on the test file")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--variant", help="row label override, e.g. Blended")

    p = commands.add_parser("evaluate-ensemble", help="score the teacher + student mixture")
    _common(p)
    p.add_argument("--teacher", required=True)
    p.add_argument("--student", required=True)
    p.add_argument("--gamma", type=float, help="teacher weight (overrides blend.gamma)")

    p = commands.add_parser("bench", help="time inference latency")
    _common(p)
    p.add_argument("--checkpoint", dest="checkpoints", action="append", help="repeatable")
    p.add_argument("--seq-len", dest="seq_lengths", type=int, action="append", help="repeatable")
    p.add_argument("--batch-size", type=int)
    p.add_argument("--warmup", type=int)
    p.add_argument("--iterations", type=int)
    p.add_argument("--repetitions", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--no-ensemble", dest="ensemble", action="store_false", default=None)

    p = commands.add_parser("sweep", help="grid over lambda and gamma")
    _common(p)
    p.add_argument("--teacher", help="teacher checkpoint (default <out>/teacher.ckpt)")
    p.add_argument("--cache", help="teacher cache (default <out>/teacher.cache.tsv)")

    p = commands.add_parser("report", help="merge metrics and bench files into tables")
    _common(p)
    p.add_argument("inputs", nargs="+", help="metrics or bench JSONL files")
    p.add_argument("--name", help="output file stem (default report)")
    return parser


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Config file values with command-line overrides applied on top."""
    cfg = load_config(args.config)
    changes: Dict[str, Any] = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out is not None:
        changes["out_dir"] = args.out
    recipe = {"train-teacher": "teacher", "train-student": "student"}.get(args.command)
    if recipe:
        section = getattr(cfg, recipe)
        overrides = {key: getattr(args, key) for key in ("epochs", "lr") if getattr(args, key) is not None}
        if getattr(args, "unidirectional", False):
            overrides["bidirectional"] = False
        if overrides:
            changes[recipe] = dataclasses.replace(section, **overrides)
    return cfg.replace(**changes) if changes else cfg


def main(argv: Optional[List[str]] = None) -> int:
    """Run one command and return its exit code."""
    try:
        args = build_parser().parse_args(argv)
        create_logger(f"blendkit {args.command}")
        cfg = resolve_config(args)
        event = {key: value for key, value in vars(args).items() if key not in ("command", "config", "seed", "out")}
        result = HANDLERS[args.command](args.command, cfg, event)
        if args.command == "report":
            sys.stdout.write(result["text"])
        else:
            print(json.dumps(result, sort_keys=True))
        return 0
    except BlendkitError as e:
        message = " ".join(str(e).split())
        print(f"error={e.category} message={message}", file=sys.stderr)
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        message = " ".join(str(e).split())
        print(f"error=runtime message={type(e).__name__}: {message}", file=sys.stderr)
        return 1
