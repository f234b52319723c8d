"""Command-line surface: single-image counting, dataset evaluation,
feature-file inspection, detection-filter baseline, density export.

Exit codes: 0 success, 1 runtime failure or per-image failures during eval,
2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import baseline as baseline_mod
from .errors import CountingError
from .evalharness import evaluate, parse_carpk, parse_fsc147
from .geometry import PixelBox
from .pipeline import CountResult, PipelineConfig, count_image, export_density
from .tensorio import FeatureMap, FileSource, load_feature_map

logger = logging.getLogger(__name__)


class _SingleFileSource:
    """Feature source serving one preloaded CDFM file."""

    def __init__(self, fmap: FeatureMap, image_id: str):
        self.fmap = fmap
        self.image_id = image_id

    def features_for(self, image_id, resolution_level: int = 0) -> FeatureMap:
        if resolution_level != self.fmap.resolution_level:
            raise CountingError(
                f"feature file was exported at level {self.fmap.resolution_level}; "
                f"pass --k {self.fmap.resolution_level}"
            )
        return self.fmap


def _parse_inline_boxes(spec: str) -> list[PixelBox]:
    boxes = []
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        coords = [float(v) for v in part.split(",")]
        if len(coords) != 4:
            raise ValueError(f"box {part!r} must have 4 coordinates")
        boxes.append(PixelBox(*coords))
    if not boxes:
        raise ValueError("no boxes given")
    return boxes


def _load_boxes_file(path) -> list[PixelBox]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if isinstance(payload, dict):
        payload = payload.get("boxes", [])
    return [PixelBox(*(float(v) for v in row[:4])) for row in payload]


def _boxes_from_args(parser, args) -> list[PixelBox]:
    if args.boxes and args.boxes_file:
        parser.error("--boxes and --boxes-file are mutually exclusive")
    if not args.boxes and not args.boxes_file:
        parser.error("one of --boxes or --boxes-file is required")
    try:
        if args.boxes:
            return _parse_inline_boxes(args.boxes)
        return _load_boxes_file(args.boxes_file)
    except (ValueError, CountingError, OSError, json.JSONDecodeError) as exc:
        parser.error(f"bad boxes: {exc}")


def _add_box_flags(sub):
    sub.add_argument("--boxes", help='inline exemplar boxes "x1,y1,x2,y2;..."')
    sub.add_argument("--boxes-file", help="JSON file with [[x1,y1,x2,y2], ...]")


def _add_pipeline_flags(sub):
    sub.add_argument("--k", type=int, default=2,
                     help="resolution level of the feature files (default 2)")
    sub.add_argument("--no-ellipse", action="store_true",
                     help="disable the elliptical exemplar prior")
    sub.add_argument("--no-threshold", action="store_true",
                     help="disable background thresholding")
    sub.add_argument("--exemplars", type=int, default=3,
                     help="max exemplar boxes to use (default 3)")
    sub.add_argument("--supersample", type=int, default=32,
                     help="mask integration subdivisions per cell (default 32)")
    sub.add_argument("--normalize-features", action="store_true",
                     help="L2-normalize feature vectors before correlation")
    sub.add_argument("--degenerate-policy", choices=("error", "zero-count"),
                     default="zero-count",
                     help="what to do when an image carries no signal "
                          "(default zero-count)")


def _config_from_args(args, keep_density: bool = False) -> PipelineConfig:
    return PipelineConfig(
        resolution_level=args.k,
        apply_ellipse=not args.no_ellipse,
        apply_threshold=not args.no_threshold,
        normalize_features=args.normalize_features,
        supersample=args.supersample,
        degenerate_policy=args.degenerate_policy,
        max_exemplars=args.exemplars,
        keep_density=keep_density,
    )


def _emit_count(args, result: CountResult) -> None:
    if args.json:
        print(json.dumps(result.to_dict(), indent=2))
    elif args.integer:
        print(round(result.count))
    else:
        print(f"{result.count:.1f}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="exemplarcount",
        description="Training-free exemplar-based object counting on dense "
                    "patch-feature maps (CDFM files)",
    )
    subs = parser.add_subparsers(dest="command", required=True)

    p_count = subs.add_parser("count", help="count objects in one image")
    p_count.add_argument("--features", required=True, help="CDFM feature file")
    _add_box_flags(p_count)
    _add_pipeline_flags(p_count)
    p_count.add_argument("--json", action="store_true", help="emit the full result as JSON")
    p_count.add_argument("--integer", action="store_true", help="round the count")

    p_eval = subs.add_parser("eval", help="evaluate a dataset split")
    p_eval.add_argument("--dataset", choices=("fsc147", "carpk"), required=True)
    p_eval.add_argument("--split", default="test", help="split to evaluate (default test)")
    p_eval.add_argument("--features-dir", required=True, help="directory of CDFM files")
    p_eval.add_argument("--ann", required=True,
                        help="annotation JSON (fsc147) or annotation dir (carpk)")
    p_eval.add_argument("--splits", default=None,
                        help="split JSON (fsc147) or image-set dir (carpk)")
    _add_pipeline_flags(p_eval)
    p_eval.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker threads (default: logical CPUs)")
    p_eval.add_argument("--json", action="store_true",
                        help="accepted for symmetry; eval always prints JSON")
    p_eval.add_argument("--out", default=None, help="also write the report JSON here")

    p_inspect = subs.add_parser("inspect", help="print a CDFM file's header")
    p_inspect.add_argument("--features", required=True)
    p_inspect.add_argument("--json", action="store_true")

    p_base = subs.add_parser("baseline",
                             help="filter external detections by prototype similarity")
    p_base.add_argument("--features", required=True, help="CDFM feature file")
    _add_box_flags(p_base)
    p_base.add_argument("--detections", required=True,
                        help="JSON mapping image id to [x1,y1,x2,y2,score] arrays")
    p_base.add_argument("--image-id", default=None,
                        help="which image's detections to use (default: sole entry)")
    p_base.add_argument("--threshold", type=float, default=0.5,
                        help="cosine similarity threshold (default 0.5)")
    p_base.add_argument("--json", action="store_true")

    p_export = subs.add_parser("export-density",
                               help="write density maps as CSV and grayscale PNG")
    p_export.add_argument("--features", required=True, help="CDFM feature file")
    _add_box_flags(p_export)
    _add_pipeline_flags(p_export)
    p_export.add_argument("--out", required=True, help="output directory")
    p_export.add_argument("--json", action="store_true")
    p_export.add_argument("--integer", action="store_true", help="round the count")

    return parser


def _cmd_count(parser, args) -> int:
    boxes = _boxes_from_args(parser, args)
    fmap = load_feature_map(args.features)
    source = _SingleFileSource(fmap, args.features)
    result = count_image(source, Path(args.features).stem, boxes,
                         _config_from_args(args))
    _emit_count(args, result)
    return 0


def _cmd_eval(parser, args) -> int:
    if args.dataset == "fsc147":
        if not args.splits:
            parser.error("--splits is required for fsc147")
        records = parse_fsc147(args.ann, args.splits, split=args.split)
    else:
        records = parse_carpk(args.ann, imageset_dir=args.splits,
                              exemplar_count=args.exemplars)
        records = [r for r in records if r.split == args.split]
    source = FileSource(args.features_dir)
    report = evaluate(records, source, _config_from_args(args), jobs=args.jobs)
    text = report.to_json()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 1 if report.failures else 0


def _cmd_inspect(parser, args) -> int:
    fmap = load_feature_map(args.features)
    info = {
        "path": args.features,
        "rows": fmap.rows,
        "cols": fmap.cols,
        "channels": fmap.channels,
        "patch_size": fmap.patch_size,
        "image_height": fmap.image_height,
        "image_width": fmap.image_width,
        "effective_height": fmap.effective_height,
        "effective_width": fmap.effective_width,
        "resolution_level": fmap.resolution_level,
    }
    if args.json:
        print(json.dumps(info, indent=2))
    else:
        for key, value in info.items():
            print(f"{key}: {value}")
    return 0


def _cmd_baseline(parser, args) -> int:
    boxes = _boxes_from_args(parser, args)
    fmap = load_feature_map(args.features)
    detections = baseline_mod.load_detections(args.detections)
    if args.image_id is not None:
        if args.image_id not in detections:
            parser.error(f"image id {args.image_id!r} not in {args.detections}")
        det = detections[args.image_id]
    elif len(detections) == 1:
        det = next(iter(detections.values()))
    else:
        parser.error("--image-id is required when the detections file has "
                     "multiple images")
    proto = baseline_mod.prototype(fmap, boxes)
    count = baseline_mod.filter_count(fmap, det, proto, threshold=args.threshold)
    if args.json:
        print(json.dumps({"image_id": det.image_id, "count": count,
                          "n_detections": len(det.boxes),
                          "threshold": args.threshold}, indent=2))
    else:
        print(count)
    return 0


def _cmd_export_density(parser, args) -> int:
    boxes = _boxes_from_args(parser, args)
    fmap = load_feature_map(args.features)
    source = _SingleFileSource(fmap, args.features)
    stem = Path(args.features).stem
    result = count_image(source, stem, boxes,
                         _config_from_args(args, keep_density=True))
    if result.density is None:
        print(f"{stem}: degenerate image; nothing to export", file=sys.stderr)
        return 1
    written = export_density(result, args.out, stem=stem, include_prethreshold=True)
    _emit_count(args, result)
    for path in written:
        print(path, file=sys.stderr)
    return 0


_HANDLERS = {
    "count": _cmd_count,
    "eval": _cmd_eval,
    "inspect": _cmd_inspect,
    "baseline": _cmd_baseline,
    "export-density": _cmd_export_density,
}


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](parser, args)
    except (CountingError, OSError, json.JSONDecodeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
