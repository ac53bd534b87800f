"""clipdump command line: encode a manifest with a frozen checkpoint and
write a CLAPEMB1 embedding file.

Exit codes: 0 success, 1 validation error (bad manifest, row-level
failures), 2 I/O error.
"""

from __future__ import annotations

import argparse
import sys

from .encoders import RowErrors
from .export import export_images, export_text
from .manifest import ManifestError


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> _Parser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="clipdump", description=__doc__, formatter_class=fmt)
    sub = p.add_subparsers(dest="mode", required=True, parser_class=_Parser)
    for mode, helptext in (
        ("text", "encode a text manifest ({id, class_name, label, text} rows)"),
        ("images", "encode an image manifest ({id, path, label} rows)"),
    ):
        q = sub.add_parser(mode, help=helptext, formatter_class=fmt)
        q.add_argument("--manifest", required=True, help="JSONL manifest path")
        q.add_argument("--model", required=True,
                       help="checkpoint id (e.g. openai/clip-vit-base-patch16) "
                            "or hash-<dim> for the offline reference encoder")
        q.add_argument("--out", required=True, help="output CLAPEMB1 path")
        q.add_argument("--batch-size", type=int, default=64, help="encoder batch size")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    run = export_text if args.mode == "text" else export_images
    try:
        count = run(args.manifest, args.model, args.out, batch_size=args.batch_size)
    except RowErrors as e:
        print("clipdump: row-level errors:", file=sys.stderr)
        for rid, msg in e.rows:
            print(f"  {rid}: {msg}", file=sys.stderr)
        return 1
    except (ManifestError, ValueError, RuntimeError) as e:
        print(f"clipdump: error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"clipdump: I/O error: {e}", file=sys.stderr)
        return 2
    print(f"wrote {count} embeddings to {args.out} (model {args.model})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
