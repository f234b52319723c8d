"""Per-exemplar similarity maps via feature-crop cross-correlation.

Each exemplar's feature crop acts as a correlation kernel slid over the full
feature map.  Outputs keep the map's spatial dims regardless of kernel size
(zero padding, anchor at floor((h-1)/2), floor((w-1)/2)), so maps from
differently sized exemplars stay co-registered and can be averaged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError, ValidationError
from .geometry import EllipticalMask, PatchBox
from .tensorio import FeatureMap


@dataclass(frozen=True)
class ExemplarKernel:
    """Feature crop of one exemplar, optionally weighted by its mask."""

    weights: np.ndarray  # (h, w, channels) float64
    source_box: PatchBox
    masked: bool

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 3 or min(w.shape) < 1:
            raise ShapeError(f"kernel must be h x w x channels, got {w.shape}")
        if not np.isfinite(w).all():
            raise ValidationError("kernel contains non-finite values")


@dataclass(frozen=True)
class SimilarityMap:
    """Dense response map with the feature map's spatial dims."""

    values: np.ndarray  # (rows, cols) float64
    n_exemplars_aggregated: int = 1

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ShapeError(f"similarity map must be 2-d, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError("similarity map contains non-finite values")

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape


def extract_kernel(
    fmap: FeatureMap,
    box: PatchBox,
    mask: EllipticalMask | None = None,
    apply_mask: bool = True,
) -> ExemplarKernel:
    """Crop the exemplar's feature cells, weighting by ``mask`` when asked."""
    if box.row2 > fmap.rows or box.col2 > fmap.cols:
        raise ShapeError(f"box {box} exceeds feature grid {fmap.grid_shape}")
    crop = fmap.data[box.row1:box.row2, box.col1:box.col2].astype(np.float64)
    if apply_mask:
        if mask is None:
            raise ValueError("apply_mask=True requires a mask")
        if mask.weights.shape != (box.height, box.width):
            raise ShapeError(
                f"mask shape {mask.weights.shape} does not match box "
                f"{box.height}x{box.width}"
            )
        crop = crop * mask.weights[:, :, None]
    return ExemplarKernel(weights=crop, source_box=box, masked=bool(apply_mask))


def correlate(fmap: FeatureMap, kernel: ExemplarKernel) -> SimilarityMap:
    """Zero-padded same-size cross-correlation of the map with a kernel.

    values(r, c) = sum_{i,j,d} kernel(i,j,d) * map(r - ph + i, c - pw + j, d)
    with ph = floor((h-1)/2), pw = floor((w-1)/2) and zeros outside the map;
    no kernel flip.  Linear in both the kernel and the map.
    """
    kw = kernel.weights
    if kw.shape[2] != fmap.channels:
        raise ShapeError(
            f"kernel has {kw.shape[2]} channels, map has {fmap.channels}"
        )
    h, w, _ = kw.shape
    rows, cols = fmap.grid_shape
    ph, pw = (h - 1) // 2, (w - 1) // 2
    padded = np.zeros((rows + h - 1, cols + w - 1, fmap.channels), dtype=np.float64)
    padded[ph:ph + rows, pw:pw + cols] = fmap.data
    out = np.zeros((rows, cols), dtype=np.float64)
    for i in range(h):
        for j in range(w):
            kij = kw[i, j]
            if not kij.any():
                continue
            out += padded[i:i + rows, j:j + cols] @ kij
    return SimilarityMap(values=out, n_exemplars_aggregated=1)


def aggregate(maps: "list[SimilarityMap] | tuple[SimilarityMap, ...]") -> SimilarityMap:
    """Elementwise mean of co-registered similarity maps."""
    if not maps:
        raise ValueError("aggregate requires at least one similarity map")
    shape = maps[0].shape
    for m in maps[1:]:
        if m.shape != shape:
            raise ShapeError(f"mixed similarity dims {m.shape} vs {shape}")
    stacked = np.stack([m.values for m in maps])
    return SimilarityMap(
        values=stacked.mean(axis=0), n_exemplars_aggregated=len(maps)
    )


def l2_normalize_features(fmap: FeatureMap, eps: float = 1e-12) -> FeatureMap:
    """Return a copy of ``fmap`` with unit-norm feature vectors (zero stays zero)."""
    norms = np.linalg.norm(fmap.data.astype(np.float64), axis=-1, keepdims=True)
    data = fmap.data / np.maximum(norms, eps)
    return FeatureMap(
        data=data.astype(np.float32),
        patch_size=fmap.patch_size,
        image_height=fmap.image_height,
        image_width=fmap.image_width,
        effective_height=fmap.effective_height,
        effective_width=fmap.effective_width,
        resolution_level=fmap.resolution_level,
    )
