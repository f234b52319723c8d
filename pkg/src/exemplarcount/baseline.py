"""Detection-filtering baseline: keep externally supplied detections whose
pooled feature is cosine-similar to the exemplar prototype, count survivors."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ValidationError
from .geometry import PixelBox, snap_box
from .tensorio import FeatureMap

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DetectionSet:
    """Detected boxes for one image, with optional detector scores."""

    image_id: str
    boxes: tuple[PixelBox, ...]
    scores: tuple[float, ...] | None = None

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if self.scores is not None:
            object.__setattr__(self, "scores", tuple(self.scores))
            if len(self.scores) != len(self.boxes):
                raise ValidationError(
                    f"{self.image_id}: {len(self.scores)} scores for "
                    f"{len(self.boxes)} boxes"
                )


def load_detections(path) -> dict[str, DetectionSet]:
    """Read a JSON file mapping image id to arrays of [x1, y1, x2, y2, score].

    The score column is optional.
    """
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    out = {}
    for image_id, rows in payload.items():
        boxes = []
        scores = []
        for row in rows:
            boxes.append(PixelBox(*(float(v) for v in row[:4])))
            scores.append(float(row[4]) if len(row) > 4 else float("nan"))
        has_scores = any(not np.isnan(s) for s in scores)
        out[image_id] = DetectionSet(
            image_id=image_id,
            boxes=tuple(boxes),
            scores=tuple(scores) if has_scores else None,
        )
    return out


def _pooled_roi(fmap: FeatureMap, box: PixelBox) -> np.ndarray:
    pb = snap_box(box, fmap.patch_size, grid_shape=fmap.grid_shape)
    crop = fmap.data[pb.row1:pb.row2, pb.col1:pb.col2].astype(np.float64)
    return crop.mean(axis=(0, 1))


def prototype(fmap: FeatureMap, exemplars: Sequence[PixelBox]) -> np.ndarray:
    """Mean-pool each exemplar's feature crop, then average across exemplars."""
    if not exemplars:
        raise ValueError("at least one exemplar box is required")
    pooled = [_pooled_roi(fmap, box) for box in exemplars]
    return np.mean(pooled, axis=0)


def filter_count(
    fmap: FeatureMap,
    detections: DetectionSet,
    proto: np.ndarray,
    threshold: float = 0.5,
) -> int:
    """Count detections whose pooled feature has cosine similarity > threshold.

    Zero-norm detection features are excluded with a warning; monotone
    nonincreasing in ``threshold``.
    """
    if not -1.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [-1, 1], got {threshold}")
    proto = np.asarray(proto, dtype=np.float64)
    proto_norm = float(np.linalg.norm(proto))
    if proto_norm == 0.0:
        raise ValidationError("prototype vector has zero norm")
    kept = 0
    for box in detections.boxes:
        vec = _pooled_roi(fmap, box)
        norm = float(np.linalg.norm(vec))
        if norm == 0.0:
            logger.warning(
                "image %s: detection %s has a zero-norm feature; excluded",
                detections.image_id, box,
            )
            continue
        sim = float(vec @ proto) / (norm * proto_norm)
        if sim > threshold:
            kept += 1
    return kept
