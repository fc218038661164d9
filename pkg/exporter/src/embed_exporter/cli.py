"""CLI: export label names to a label set directory.

    embed-exporter export --names labels.txt --encoder st:MODEL --out dir
"""

from __future__ import annotations

import argparse
import sys

from .encoders import EncoderUnavailableError
from .export import EmptyNamesError, ExportJob, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="embed-exporter")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="encode label names and write a label set")
    p.add_argument("--names", required=True, help="one display name per line")
    p.add_argument("--templates", default=None,
                   help="prompt templates, one per line (default: bundled standard list)")
    p.add_argument("--encoder", default="debug-hash",
                   help="st:<model> for real embeddings; debug-hash[:dim] for fixtures")
    p.add_argument("--out", required=True)
    args = parser.parse_args(argv)

    job = ExportJob(
        names_file=args.names,
        templates_file=args.templates,
        encoder=args.encoder,
        out_dir=args.out,
    )
    try:
        out = export(job)
    except EncoderUnavailableError as exc:
        print(f"error: encoder-unavailable: {exc}", file=sys.stderr)
        return 1
    except (EmptyNamesError, ValueError) as exc:
        print(f"error: usage: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: io: {exc}", file=sys.stderr)
        return 3
    print(f"out={out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
