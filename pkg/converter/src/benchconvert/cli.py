"""CLI: convert --source <path> --dataset <tag> --out <path> [--priors <json>]

Exits nonzero on validation failure and prints the conversion report
(records written/skipped, output checksum) to stdout.
"""

from __future__ import annotations

import argparse
import sys

from .convert import DATASETS, ConversionError, convert


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="benchconvert",
        description="Convert published NAS-Bench dumps to the bench-v1 format.",
    )
    parser.add_argument("--source", required=True, help="input dump path")
    parser.add_argument("--dataset", required=True, choices=DATASETS)
    parser.add_argument("--out", required=True, help="output benchmark file")
    parser.add_argument("--priors", help="optional JSON sidecar of prior scores "
                                         "(canonical key -> {metric: value})")
    args = parser.parse_args(argv)
    try:
        report = convert(args.source, args.dataset, args.out, priors_path=args.priors)
    except ConversionError as exc:
        print(f"benchconvert: error: {exc}", file=sys.stderr)
        return 1
    print(report.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())
