"""Command-line entry point: parse a raw corpus file into the interchange
format."""

from __future__ import annotations

import argparse
import sys

from .convert import parse_corpus
from .parser import AdapterError


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="styleparse",
        description="Parse raw {id, article, summary} JSONL into "
                    "dependency-parsed JSONL.")
    p.add_argument("input", help="raw corpus JSONL file")
    p.add_argument("output", help="parsed corpus JSONL file to write")
    p.add_argument("--model", default="rule-en-1",
                   help="parser model id (default: rule-en-1)")
    p.add_argument("--report", default=None, metavar="PATH",
                   help="also write the conversion report to this file")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        report = parse_corpus(args.input, args.output, args.model,
                              report_path=args.report)
    except (AdapterError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(report.text())
    return 0


if __name__ == "__main__":
    sys.exit(main())
