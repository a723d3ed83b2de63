"""Command-line entry point.

Operational failures exit 1 after printing a single line to stderr,
"error: <ErrorClass>: <message>"; argparse usage errors exit 2.
"""

from __future__ import annotations

import argparse
import sys

from . import __version__
from .errors import HsxError
from .extract import ExtractionJob, extract
from .prompts import TARGET_MODES


def _csv_ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _csv_modes(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hsx",
        description="Extract pooled per-layer hidden states from a causal LM",
    )
    parser.add_argument("--version", action="version", version=f"hsx {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    ex = sub.add_parser("extract", help="run a model over a dataset and write a container")
    ex.add_argument("--model", required=True, help="model directory or identifier")
    ex.add_argument("--dataset", required=True, help="JSONL file of examples")
    ex.add_argument("--out", required=True, help="container file to write")
    layers = ex.add_mutually_exclusive_group()
    layers.add_argument("--layers", type=_csv_ints, default=None,
                        help="explicit hidden-state indices, e.g. 0,5")
    layers.add_argument("--layer-stride", type=int, default=5,
                        help="keep every Nth hidden state starting at 0 (default 5)")
    ex.add_argument("--modes", type=_csv_modes, default=("mean", "eos"),
                    help="pooling modes to store (default mean,eos)")
    ex.add_argument("--targets", choices=TARGET_MODES, default="query",
                    help="which text to embed as target states (default query)")
    ex.add_argument("--batch-size", type=int, default=8)
    ex.add_argument("--device", default="cpu")
    ex.add_argument("--max-tokens", type=int, default=None,
                    help="skip rows whose prompts exceed this many tokens")
    ex.set_defaults(func=_cmd_extract)

    tm = sub.add_parser("tiny-model", help="build a small local model for smoke tests")
    tm.add_argument("--out", required=True, help="directory to save model and tokenizer")
    tm.add_argument("--seed", type=int, default=0)
    tm.add_argument("--hidden-size", type=int, default=64)
    tm.add_argument("--n-layers", type=int, default=6)
    tm.set_defaults(func=_cmd_tiny_model)

    return parser


def _cmd_extract(args: argparse.Namespace) -> int:
    job = ExtractionJob(
        model=args.model,
        dataset=args.dataset,
        out=args.out,
        layer_ids=args.layers,
        layer_stride=args.layer_stride,
        pooling_modes=tuple(args.modes),
        targets=args.targets,
        batch_size=args.batch_size,
        device=args.device,
        max_tokens=args.max_tokens,
    )
    report = extract(job)
    print(
        f"wrote {report.out}: {report.n_written} records, "
        f"dim={report.dim}, layers={list(report.layer_ids)}"
    )
    if report.skipped:
        print(f"skipped {len(report.skipped)} rows:")
        for entry in report.skipped:
            print(f"  {entry.id}: {entry.reason}")
    return 0


def _cmd_tiny_model(args: argparse.Namespace) -> int:
    from .tinymodel import build_tiny_model

    path = build_tiny_model(
        args.out, seed=args.seed, hidden_size=args.hidden_size, n_layers=args.n_layers
    )
    print(f"wrote tiny model to {path}")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "func"):
        parser.error("a command is required")
    try:
        return args.func(args)
    except (HsxError, OSError) as e:
        msg = " ".join(str(e).split())
        print(f"error: {type(e).__name__}: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
