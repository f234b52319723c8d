"""Command-line surface: batch feature export and backbone listing."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import backbones
from .export import ExportJob, collect_images, export_features, export_onnx_graph


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cdfm-export",
        description="Export dense patch-feature maps from pretrained "
                    "self-supervised backbones as CDFM v1 files",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_export = subs.add_parser("export", help="export CDFM files for a directory of images")
    p_export.add_argument("--backbone", required=True, choices=backbones.available())
    p_export.add_argument("--k", type=int, default=2,
                          help="quadrant resolution level (default 2)")
    p_export.add_argument("--images", required=True,
                          help="directory of images (or a single image file)")
    p_export.add_argument("--out", required=True, help="output directory")
    p_export.add_argument("--resize-long-side", type=int, default=None,
                          help="optionally resize so the long side equals N "
                               "(default: native resolution)")
    p_export.add_argument("--device", default="cpu")
    p_export.add_argument("--check-determinism", action="store_true",
                          help="re-embed the first image and require "
                               "byte-identical output")

    subs.add_parser("list-backbones", help="print the known backbones")

    p_onnx = subs.add_parser("export-onnx",
                             help="export the backbone itself as an ONNX graph")
    p_onnx.add_argument("--backbone", required=True, choices=backbones.available())
    p_onnx.add_argument("--out", required=True, help="output .onnx path")
    p_onnx.add_argument("--device", default="cpu")

    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "list-backbones":
        for name in backbones.available():
            spec = backbones.REGISTRY[name]
            print(f"{name}  patch={spec.patch_size}  dim={spec.embed_dim}")
        return 0

    try:
        if args.command == "export":
            images_arg = Path(args.images)
            images = [images_arg] if images_arg.is_file() else collect_images(images_arg)
            if not images:
                print(f"error: no images found under {args.images}", file=sys.stderr)
                return 1
            job = ExportJob(
                backbone=args.backbone,
                resolution_level=args.k,
                images=images,
                out_dir=args.out,
                resize_long_side=args.resize_long_side,
                device=args.device,
                check_determinism=args.check_determinism,
            )
            written = export_features(job)
            for path in written:
                print(path)
            if len(written) < len(images):
                print(f"warning: {len(images) - len(written)} image(s) failed",
                      file=sys.stderr)
                return 1
            return 0
        if args.command == "export-onnx":
            print(export_onnx_graph(args.backbone, args.out, device=args.device))
            return 0
    except (RuntimeError, KeyError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 2


if __name__ == "__main__":
    sys.exit(main())
