"""Command line entry point.

Two modes, one invocation each:
  embexport --manifest dataset.json --out images.emb
  embexport --prompts prompts.tsv --model MODEL --out texts.emb
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from .export import ClipEncoder, PromptFileError, export_images, export_texts
from .manifest import ExportManifest, ManifestError


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="embexport",
        description="Export CLIP image/text embeddings as EMB1 archives",
    )
    ap.add_argument("--manifest", help="dataset manifest JSON (image export)")
    ap.add_argument("--prompts", help="class<TAB>prompt file (text export)")
    ap.add_argument("--out", required=True, help="output archive path")
    ap.add_argument("--model", help="model id or path; overrides the manifest's")
    ap.add_argument("--batch-size", type=int, default=None)
    ap.add_argument("--device", default=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    if bool(args.manifest) == bool(args.prompts):
        print("error: exactly one of --manifest or --prompts is required", file=sys.stderr)
        return 1
    try:
        if args.manifest:
            manifest = ExportManifest.load(args.manifest)
            overrides = {}
            if args.model:
                overrides["model"] = args.model
            if args.batch_size:
                overrides["batch_size"] = args.batch_size
            if args.device:
                overrides["device"] = args.device
            if overrides:
                manifest = replace(manifest, **overrides)
            n = export_images(manifest, args.out)
        else:
            if not args.model:
                print("error: --prompts requires --model", file=sys.stderr)
                return 1
            encoder = ClipEncoder(
                args.model, args.device or "cpu", args.batch_size or 16
            )
            n = export_texts(args.prompts, encoder, args.out)
    except (ManifestError, PromptFileError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {args.out} ({n} records)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
