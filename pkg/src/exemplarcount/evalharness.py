"""Dataset parsing and benchmark evaluation (MAE / RMSE).

Two annotation flavors are supported:

* a JSON file mapping image name to ``{"box_examples_coordinates":
  [[[x, y] * 4], ...], "points": [[x, y], ...]}`` plus a split JSON mapping
  split name to an image-name list;
* a directory of per-image ``.txt`` files with one ``x1 y1 x2 y2`` box per
  line (extra columns ignored), with optional train/test image-set lists.
"""

from __future__ import annotations

import json
import logging
import math
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import CountingError, EvaluationError, GeometryError, ValidationError
from .geometry import PixelBox
from .pipeline import PipelineConfig, count_image

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AnnotationRecord:
    """One benchmark image: exemplar boxes plus the ground-truth count."""

    image_id: str
    exemplar_boxes: tuple[PixelBox, ...]
    gt_count: int
    split: str

    def __post_init__(self):
        object.__setattr__(self, "exemplar_boxes", tuple(self.exemplar_boxes))
        if not self.exemplar_boxes:
            raise ValidationError(f"{self.image_id}: no exemplar boxes")
        if self.gt_count < 0:
            raise ValidationError(f"{self.image_id}: negative ground truth")


@dataclass
class EvalReport:
    """Dataset-level metrics plus per-image details and failures."""

    split: str
    n_images: int
    mae: float
    rmse: float
    per_image: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "split": self.split,
            "n_images": self.n_images,
            "mae": self.mae,
            "rmse": self.rmse,
            "per_image": self.per_image,
            "config": self.config,
            "failures": self.failures,
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        return cls(**payload)


def _box_from_corners(corners) -> PixelBox:
    xs = [float(p[0]) for p in corners]
    ys = [float(p[1]) for p in corners]
    return PixelBox(x1=min(xs), y1=min(ys), x2=max(xs), y2=max(ys))


def parse_fsc147(annotation_json, split_file, split: str | None = None) -> list[AnnotationRecord]:
    """Read exemplar boxes and point counts from the JSON annotation schema.

    Boxes are given as four corner points each and reduced via min/max; the
    ground-truth count is the number of point annotations.  Images listed in
    a split but absent from the annotation file are skipped with a warning,
    as are boxes that degenerate after the min/max reduction.
    """
    with open(annotation_json, "r", encoding="utf-8") as fh:
        annotations = json.load(fh)
    with open(split_file, "r", encoding="utf-8") as fh:
        splits = json.load(fh)

    records = []
    for split_name, image_ids in splits.items():
        if split is not None and split_name != split:
            continue
        for image_id in image_ids:
            meta = annotations.get(image_id)
            if meta is None:
                logger.warning("image %s listed in split %s has no annotation; skipped",
                               image_id, split_name)
                continue
            boxes = []
            for corners in meta.get("box_examples_coordinates", []):
                try:
                    boxes.append(_box_from_corners(corners))
                except (GeometryError, IndexError, TypeError, ValueError) as exc:
                    logger.warning("image %s: malformed exemplar box %r (%s); dropped",
                                   image_id, corners, exc)
            if not boxes:
                logger.warning("image %s: no usable exemplar boxes; skipped", image_id)
                continue
            records.append(
                AnnotationRecord(
                    image_id=image_id,
                    exemplar_boxes=tuple(boxes),
                    gt_count=len(meta.get("points", [])),
                    split=split_name,
                )
            )
    return records


def parse_carpk(
    annotation_dir,
    imageset_dir=None,
    exemplar_count: int = 3,
    selection: str = "head",
    seed: int | None = None,
) -> list[AnnotationRecord]:
    """Read per-image box-list annotations (one ``x1 y1 x2 y2`` per line).

    The ground truth is the number of boxes; the first ``exemplar_count``
    boxes in file order become the exemplars (``selection="random"`` draws a
    seeded sample instead).  Split membership comes from ``train.txt`` /
    ``test.txt`` lists in ``imageset_dir`` when given, else every record is
    tagged ``test``.
    """
    if selection not in ("head", "random"):
        raise ValueError(f"selection must be 'head' or 'random', got {selection!r}")
    ann_dir = Path(annotation_dir)
    split_of = {}
    if imageset_dir is not None:
        for split_name in ("train", "test", "val"):
            listing = Path(imageset_dir) / f"{split_name}.txt"
            if listing.is_file():
                for line in listing.read_text().splitlines():
                    name = line.strip()
                    if name:
                        split_of[Path(name).stem] = split_name
    rng = random.Random(seed)

    records = []
    for txt in sorted(ann_dir.glob("*.txt")):
        boxes = []
        for lineno, line in enumerate(txt.read_text().splitlines(), start=1):
            parts = line.split()
            if not parts:
                continue
            try:
                x1, y1, x2, y2 = (float(v) for v in parts[:4])
                boxes.append(PixelBox(x1=x1, y1=y1, x2=x2, y2=y2))
            except (GeometryError, ValueError) as exc:
                logger.warning("%s:%d: malformed box line %r (%s); dropped",
                               txt.name, lineno, line, exc)
        if not boxes:
            logger.warning("%s: no usable boxes; skipped", txt.name)
            continue
        if selection == "random" and len(boxes) > exemplar_count:
            exemplar_boxes = tuple(rng.sample(boxes, exemplar_count))
        else:
            exemplar_boxes = tuple(boxes[:exemplar_count])
        records.append(
            AnnotationRecord(
                image_id=txt.stem,
                exemplar_boxes=exemplar_boxes,
                gt_count=len(boxes),
                split=split_of.get(txt.stem, "test"),
            )
        )
    return records


def compute_mae_rmse(gts: Sequence[float], preds: Sequence[float]) -> tuple[float, float]:
    """Mean absolute error and root mean squared error of count predictions."""
    if len(gts) != len(preds) or len(gts) == 0:
        raise ValueError("gts and preds must be nonempty and equally long")
    diffs = np.asarray(preds, dtype=np.float64) - np.asarray(gts, dtype=np.float64)
    mae = float(np.mean(np.abs(diffs)))
    rmse = math.sqrt(float(np.mean(diffs * diffs)))
    return mae, rmse


def evaluate(
    records: Sequence[AnnotationRecord],
    source,
    config: PipelineConfig | None = None,
    jobs: int = 1,
) -> EvalReport:
    """Run the pipeline over ``records`` and compute split-level MAE/RMSE.

    Per-image failures are collected, reported, and excluded from the
    metrics; the run only fails when no image evaluates successfully.
    Results are reduced in input order regardless of ``jobs``.
    """
    cfg = config or PipelineConfig()
    if not records:
        raise EvaluationError("no records to evaluate")

    def run_one(record: AnnotationRecord):
        try:
            result = count_image(source, record.image_id, record.exemplar_boxes, cfg)
            return record, result, None
        except (CountingError, OSError, ValueError) as exc:
            return record, None, exc

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run_one, records))
    else:
        outcomes = [run_one(r) for r in records]

    per_image = []
    failures = []
    for record, result, exc in outcomes:
        if exc is not None:
            logger.warning("image %s failed: %s", record.image_id, exc)
            failures.append({"image_id": record.image_id, "error": str(exc)})
            continue
        per_image.append(
            {
                "image_id": record.image_id,
                "gt": record.gt_count,
                "pred": result.count,
                "abs_err": abs(record.gt_count - result.count),
            }
        )
    if not per_image:
        raise EvaluationError("no image evaluated successfully")

    mae, rmse = compute_mae_rmse(
        [e["gt"] for e in per_image], [e["pred"] for e in per_image]
    )
    split_names = {r.split for r in records}
    return EvalReport(
        split=split_names.pop() if len(split_names) == 1 else "mixed",
        n_images=len(records),
        mae=mae,
        rmse=rmse,
        per_image=per_image,
        config=cfg.to_dict(),
        failures=failures,
    )
