"""End-to-end count for one image: features -> snapping -> masks -> kernels
-> correlation -> aggregation -> min-max -> z -> density -> threshold -> count."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .density import (
    DensityMap,
    ExemplarSet,
    minmax,
    normalization_factor,
    normalize,
    threshold_and_count,
)
from .errors import DegenerateMapError, DegenerateNormalizationError
from .geometry import (
    PatchBox,
    PixelBox,
    accumulate_global_mask,
    elliptical_mask,
    snap_box,
    uniform_mask,
)
from .matching import aggregate, correlate, extract_kernel, l2_normalize_features

logger = logging.getLogger(__name__)

_DEGENERATE_POLICIES = ("error", "zero-count")


@dataclass(frozen=True)
class PipelineConfig:
    """Knobs of the counting pipeline.

    Defaults match the strongest configuration: level-2 quadrant features,
    elliptical prior on, background threshold on, raw dot-product similarity,
    up to three exemplars.
    """

    resolution_level: int = 2
    apply_ellipse: bool = True
    apply_threshold: bool = True
    normalize_features: bool = False
    supersample: int = 32
    degenerate_policy: str = "error"
    max_exemplars: int = 3
    keep_density: bool = False

    def __post_init__(self):
        if self.resolution_level < 0:
            raise ValueError("resolution_level must be >= 0")
        if self.supersample < 1:
            raise ValueError("supersample must be >= 1")
        if self.max_exemplars < 1:
            raise ValueError("max_exemplars must be >= 1")
        if self.degenerate_policy not in _DEGENERATE_POLICIES:
            raise ValueError(
                f"degenerate_policy must be one of {_DEGENERATE_POLICIES}, "
                f"got {self.degenerate_policy!r}"
            )

    def to_dict(self) -> dict:
        return {
            "resolution_level": self.resolution_level,
            "apply_ellipse": self.apply_ellipse,
            "apply_threshold": self.apply_threshold,
            "normalize_features": self.normalize_features,
            "supersample": self.supersample,
            "degenerate_policy": self.degenerate_policy,
            "max_exemplars": self.max_exemplars,
        }


@dataclass
class CountResult:
    """Predicted count for one image plus the diagnostics that produced it."""

    image_id: str
    count: float
    raw_count: float
    z: float
    tau: float | None
    n_exemplars: int
    patch_boxes: tuple[PatchBox, ...] = field(default_factory=tuple)
    density: DensityMap | None = None
    prethreshold_density: DensityMap | None = None
    degenerate: bool = False

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "count": self.count,
            "raw_count": self.raw_count,
            "z": self.z,
            "tau": self.tau,
            "n_exemplars": self.n_exemplars,
            "patch_boxes": [
                [b.col1, b.row1, b.col2, b.row2] for b in self.patch_boxes
            ],
            "degenerate": self.degenerate,
        }


def count_image(
    source,
    image_id,
    exemplars: Sequence[PixelBox],
    config: PipelineConfig | None = None,
) -> CountResult:
    """Count instances of the exemplar category in one image.

    ``source`` is any object with ``features_for(image_id, resolution_level)``.
    Exemplars beyond ``config.max_exemplars`` are dropped, keeping annotation
    order.  Degenerate similarity statistics either raise or produce a
    zero-count result, per ``config.degenerate_policy``.
    """
    cfg = config or PipelineConfig()
    boxes = list(exemplars)[: cfg.max_exemplars]
    if not boxes:
        raise ValueError("at least one exemplar box is required")
    fmap = source.features_for(image_id, cfg.resolution_level)
    if cfg.normalize_features:
        fmap = l2_normalize_features(fmap)

    pboxes = [
        snap_box(b, fmap.patch_size, grid_shape=fmap.grid_shape) for b in boxes
    ]
    if cfg.apply_ellipse:
        masks = [elliptical_mask(pb, cfg.supersample) for pb in pboxes]
    else:
        masks = [uniform_mask(pb) for pb in pboxes]
    kernels = [
        extract_kernel(fmap, pb, mask, apply_mask=cfg.apply_ellipse)
        for pb, mask in zip(pboxes, masks)
    ]
    sim = aggregate([correlate(fmap, kn) for kn in kernels])

    try:
        s01 = minmax(sim)
        gmask = accumulate_global_mask(masks, fmap.grid_shape)
        z = normalization_factor(s01, gmask, len(pboxes))
    except (DegenerateMapError, DegenerateNormalizationError) as exc:
        if cfg.degenerate_policy == "zero-count":
            logger.warning("image %s: %s; reporting count 0", image_id, exc)
            return CountResult(
                image_id=str(image_id),
                count=0.0,
                raw_count=0.0,
                z=0.0,
                tau=None,
                n_exemplars=len(pboxes),
                patch_boxes=tuple(pboxes),
                degenerate=True,
            )
        raise

    pre = normalize(s01, z)
    if cfg.apply_threshold:
        final = threshold_and_count(pre, ExemplarSet(tuple(pboxes)))
    else:
        final = pre
    keep = cfg.keep_density
    return CountResult(
        image_id=str(image_id),
        count=final.count,
        raw_count=final.raw_count,
        z=z,
        tau=final.tau,
        n_exemplars=len(pboxes),
        patch_boxes=tuple(pboxes),
        density=final if keep else None,
        prethreshold_density=pre if keep else None,
    )


def density_to_png_bytes(values: np.ndarray) -> bytes:
    """Encode a density map as 8-bit grayscale PNG, max value mapped to 255."""
    from PIL import Image
    import io

    vals = np.asarray(values, dtype=np.float64)
    vmax = float(vals.max()) if vals.size else 0.0
    if vmax > 0.0:
        pixels = np.floor(vals * (255.0 / vmax)).clip(0, 255).astype(np.uint8)
    else:
        pixels = np.zeros(vals.shape, dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(pixels, mode="L").save(buf, format="PNG")
    return buf.getvalue()


def export_density(
    result: CountResult,
    out_dir,
    stem: str | None = None,
    include_prethreshold: bool = False,
) -> list[Path]:
    """Write the retained density map(s) as CSV and grayscale PNG.

    CSV holds the raw grid values (comma-separated, 9 significant digits);
    PNG scales linearly so the maximum value maps to 255 (floor).  With
    ``include_prethreshold`` the pre-threshold map is written alongside under
    ``<stem>_prethreshold.*``.
    """
    if result.density is None:
        raise ValueError(
            "density maps were not retained; run with keep_density=True"
        )
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    base = stem if stem is not None else (Path(str(result.image_id)).stem or "density")
    targets = [(base, result.density)]
    if include_prethreshold and result.prethreshold_density is not None:
        targets.append((f"{base}_prethreshold", result.prethreshold_density))
    written = []
    for name, dmap in targets:
        csv_path = out / f"{name}.csv"
        np.savetxt(csv_path, dmap.values, fmt="%.9g", delimiter=",")
        png_path = out / f"{name}.png"
        png_path.write_bytes(density_to_png_bytes(dmap.values))
        written.extend([csv_path, png_path])
    return written
