"""Command line: render one named figure from a sweep CSV."""

from __future__ import annotations

import argparse
import sys

from .render import FIGURES, RenderError, figure_spec, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dfrc-plots",
                                description="render sweep-CSV figures")
    p.add_argument("--csv", required=True, help="sweep results CSV")
    p.add_argument("--figure", required=True, choices=sorted(FIGURES),
                   help="figure family to draw")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--schemes", default="",
                   help="comma-separated scheme filter (default: all present)")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    schemes = tuple(s.strip() for s in args.schemes.split(",") if s.strip())
    try:
        out = render(figure_spec(args.figure, args.csv, args.out, schemes))
    except (RenderError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
