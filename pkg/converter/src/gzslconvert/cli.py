"""Command line: convert --features res101.mat --splits att_splits.mat
--out bundle_dir [--attr-rows classes|dims]"""

from __future__ import annotations

import argparse
import sys

from .convert import ConvertError, SourceArchivePair, convert


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gzsl-convert",
        description="Convert res101/att_splits MATLAB archives into a "
                    "gzslgate bundle directory")
    parser.add_argument("--features", required=True,
                        help="per-image feature archive (res101.mat)")
    parser.add_argument("--splits", required=True,
                        help="attribute/split archive (att_splits.mat)")
    parser.add_argument("--out", required=True, help="output bundle directory")
    parser.add_argument("--attr-rows", choices=("classes", "dims"),
                        default=None,
                        help="attribute matrix orientation when it cannot "
                             "be auto-detected (square matrix)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        convert(SourceArchivePair(args.features, args.splits), args.out,
                attr_rows=args.attr_rows)
    except ConvertError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(f"wrote bundle: {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
