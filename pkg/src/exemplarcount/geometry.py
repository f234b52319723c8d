"""Box snapping, per-exemplar coverage masks, and the accumulated global mask.

Pixel-space boxes are snapped onto the patch grid with floor/ceil so that the
snapped box always covers every pixel of the original one.  Each snapped box
gets a soft spatial prior: the fraction of every feature cell covered by the
ellipse inscribed in the box.  Priors from all exemplars are accumulated into
one grid-sized map used by the density normalization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ShapeError


@dataclass(frozen=True)
class PixelBox:
    """Axis-aligned box in pixel coordinates, origin top-left, x right, y down."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        vals = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite box coordinates {vals}")
        if self.x1 < 0 or self.y1 < 0 or self.x2 <= self.x1 or self.y2 <= self.y1:
            raise GeometryError(f"degenerate pixel box {vals}")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1


@dataclass(frozen=True)
class PatchBox:
    """Half-open box [col1, col2) x [row1, row2) in patch-grid indices."""

    col1: int
    row1: int
    col2: int
    row2: int

    def __post_init__(self):
        vals = (self.col1, self.row1, self.col2, self.row2)
        if any(not isinstance(v, (int, np.integer)) for v in vals):
            raise GeometryError(f"patch box indices must be integers, got {vals}")
        if self.col1 < 0 or self.row1 < 0 or self.col2 <= self.col1 or self.row2 <= self.row1:
            raise GeometryError(f"degenerate patch box {vals}")

    @property
    def width(self) -> int:
        return self.col2 - self.col1

    @property
    def height(self) -> int:
        return self.row2 - self.row1

    @property
    def area(self) -> int:
        return self.width * self.height


@dataclass(frozen=True)
class EllipticalMask:
    """Per-cell coverage weights in [0, 1] for one snapped exemplar box."""

    weights: np.ndarray
    source: PatchBox

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.shape != (self.source.height, self.source.width):
            raise ShapeError(
                f"mask shape {w.shape} does not match box "
                f"{self.source.height}x{self.source.width}"
            )
        if w.min() < 0.0 or w.max() > 1.0:
            raise GeometryError("mask weights must lie in [0, 1]")


@dataclass(frozen=True)
class GlobalMask:
    """Accumulated exemplar coverage over the full feature grid."""

    weights: np.ndarray
    n_masks: int

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2:
            raise ShapeError("global mask must be a 2-d matrix")
        if w.size and w.min() < 0.0:
            raise GeometryError("global mask must be nonnegative")


def snap_box(
    box: PixelBox,
    patch_size: int,
    scale: int = 1,
    grid_shape: tuple[int, int] | None = None,
) -> PatchBox:
    """Snap a pixel box to the patch grid, expanding to cover every pixel.

    The grid pitch is ``patch_size / scale`` pixels; maps produced by quadrant
    stitching at native image size keep pitch ``patch_size`` at every
    resolution level, so ``scale`` stays 1 in the standard pipeline.  With
    ``grid_shape=(rows, cols)`` the result is clamped to the grid and a box
    entirely outside it raises :class:`GeometryError`.
    """
    if patch_size < 1:
        raise ValueError(f"patch_size must be >= 1, got {patch_size}")
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    pitch = patch_size / scale
    col1 = math.floor(box.x1 / pitch)
    row1 = math.floor(box.y1 / pitch)
    col2 = math.ceil(box.x2 / pitch)
    row2 = math.ceil(box.y2 / pitch)
    if grid_shape is not None:
        rows, cols = grid_shape
        if col1 >= cols or row1 >= rows or col2 <= 0 or row2 <= 0:
            raise GeometryError(
                f"box {box} lies outside the {rows}x{cols} feature grid"
            )
        # x1 < x2 guarantees col1 < col2 before clamping, and the clamp keeps
        # at least one cell because both endpoints straddle the grid edge.
        col1, row1 = max(col1, 0), max(row1, 0)
        col2, row2 = min(col2, cols), min(row2, rows)
    return PatchBox(col1=col1, row1=row1, col2=col2, row2=row2)


def elliptical_mask(box: PatchBox, supersample: int = 32) -> EllipticalMask:
    """Coverage of each cell of ``box`` by the ellipse inscribed in the box.

    The ellipse is centered at (w/2, h/2) with semi-axes w/2 and h/2 in cell
    units.  Each cell's coverage is integrated on a ``supersample``-row
    subdivision: the inside chord is measured exactly along x and a 3-point
    Gauss-Legendre rule integrates across each subrow in y.  Doubling
    ``supersample`` changes any weight by well under 1e-3.
    """
    if supersample < 1:
        raise ValueError(f"supersample must be >= 1, got {supersample}")
    h, w, s = box.height, box.width, supersample
    a, b = w / 2.0, h / 2.0
    nodes, node_weights = np.polynomial.legendre.leggauss(3)
    edges = np.arange(h * s) / s
    ys = edges[:, None] + (nodes[None, :] + 1.0) * (0.5 / s)  # (h*s, 3)
    # Half-chord of the ellipse at each sampled y; empty outside [0, h].
    t = 1.0 - ((ys - b) / b) ** 2
    half = a * np.sqrt(np.clip(t, 0.0, None))
    xlo, xhi = a - half, a + half
    cells = np.arange(w, dtype=np.float64)
    lo = np.maximum(xlo[:, :, None], cells[None, None, :])
    hi = np.minimum(xhi[:, :, None], cells[None, None, :] + 1.0)
    cover = np.clip(hi - lo, 0.0, None)  # (h*s, 3, w)
    row_cover = np.einsum("rnw,n->rw", cover, node_weights * 0.5)
    weights = row_cover.reshape(h, s, w).mean(axis=1)
    return EllipticalMask(weights=np.clip(weights, 0.0, 1.0), source=box)


def uniform_mask(box: PatchBox) -> EllipticalMask:
    """All-ones mask over ``box`` (the ellipse-prior-off variant)."""
    return EllipticalMask(weights=np.ones((box.height, box.width)), source=box)


def accumulate_global_mask(
    masks: "list[EllipticalMask] | tuple[EllipticalMask, ...]",
    dims: tuple[int, int],
) -> GlobalMask:
    """Sum per-exemplar masks into a zero-initialized rows x cols map.

    Overlapping exemplars add up; an empty list yields the all-zero mask.
    """
    rows, cols = dims
    if rows < 1 or cols < 1:
        raise ValueError(f"mask dims must be positive, got {dims}")
    out = np.zeros((rows, cols), dtype=np.float64)
    for mask in masks:
        b = mask.source
        if b.row2 > rows or b.col2 > cols:
            raise GeometryError(
                f"exemplar box {b} exceeds the {rows}x{cols} grid"
            )
        out[b.row1:b.row2, b.col1:b.col2] += mask.weights
    return GlobalMask(weights=out, n_masks=len(masks))
