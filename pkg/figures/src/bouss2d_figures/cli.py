"""figures --input-dir D --output-dir O --format png"""

import argparse
import sys

from .plots import CsvFormatError, FigureSpec, render_all


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render the convergence-study figures from campaign CSVs",
    )
    parser.add_argument("--input-dir", required=True, help="directory with the CSVs")
    parser.add_argument("--output-dir", required=True, help="where to write figures")
    parser.add_argument("--format", default="png", choices=("png", "svg"))
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = FigureSpec(
            input_dir=args.input_dir,
            output_dir=args.output_dir,
            format=args.format,
            dpi=args.dpi,
        )
        paths = render_all(spec)
    except (CsvFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
