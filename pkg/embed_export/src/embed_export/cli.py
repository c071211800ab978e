"""Command line front end: ``embed-export export --manifest M --out F
--model NAME``."""

import argparse
import sys

from .errors import ExportError
from .export import export_manifest


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embed-export",
        description="Write per-face descriptor vectors as an FSPE1 file.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    exp = sub.add_parser("export", help="embed every face in a manifest")
    exp.add_argument("--manifest", required=True, help="dataset manifest JSON")
    exp.add_argument("--out", required=True, help="FSPE1 output path")
    exp.add_argument("--model", required=True,
                     help="descriptor backend, e.g. hashproj:256 or "
                          "torchvision:vgg16")
    exp.add_argument("--batch", type=int, default=16,
                     help="inference batch size (default 16)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        result = export_manifest(args.manifest, args.out, args.model,
                                 batch_size=args.batch)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {args.out}: {result.written} vectors"
          + (f" ({result.skipped} faces skipped)" if result.skipped else ""))
    return 0
