"""Command-line entry point: figures --kind K --in PATH [--in PATH2] --out PATH."""

import argparse
import sys

from pamfigures.render import SCHEMAS, FigureError, FigureRequest, render


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="figures",
        description="Render laboratory CSV outputs as figures with CI bands.",
    )
    parser.add_argument("--kind", required=True, choices=sorted(SCHEMAS))
    parser.add_argument("--in", dest="inputs", action="append", required=True,
                        metavar="PATH", help="input CSV (repeatable)")
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--title", default=None)
    args = parser.parse_args(argv)
    request = FigureRequest(
        kind=args.kind, inputs=tuple(args.inputs), out=args.out, title=args.title,
    )
    try:
        render(request)
    except (OSError, FigureError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
