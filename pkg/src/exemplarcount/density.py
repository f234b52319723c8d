"""Similarity-to-density conversion: min-max rescale, exemplar-mass
normalization, unit-count threshold, and integration to a count.

The normalization factor z is the mean exemplar-region response of the
rescaled map: z = (1/N) * sum_xy M(x,y) * s01(x,y) with M the accumulated
exemplar mask.  Dividing by z makes the response over the N exemplar regions
sum to exactly N, so the map integrates like a density.  Cells below the mean
per-patch unit count of the largest exemplar are treated as background.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    DegenerateMapError,
    DegenerateNormalizationError,
    ShapeError,
    ValidationError,
)
from .geometry import GlobalMask, PatchBox
from .matching import SimilarityMap


@dataclass(frozen=True)
class ExemplarSet:
    """The exemplar boxes in patch space, used for unit-count statistics."""

    boxes: tuple[PatchBox, ...]

    def __post_init__(self):
        object.__setattr__(self, "boxes", tuple(self.boxes))
        if not self.boxes:
            raise ValidationError("exemplar set must be nonempty")

    @property
    def areas(self) -> tuple[int, ...]:
        return tuple(b.area for b in self.boxes)

    @property
    def largest_area(self) -> int:
        return max(self.areas)


@dataclass(frozen=True)
class DensityMap:
    """Nonnegative density values plus the scalars that produced them."""

    values: np.ndarray
    z: float
    tau: float | None
    raw_count: float
    count: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", v)
        if v.ndim != 2:
            raise ShapeError(f"density map must be 2-d, got shape {v.shape}")
        if not np.isfinite(v).all():
            raise ValidationError("density map contains non-finite values")
        if v.min() < 0.0:
            raise ValidationError("density values must be nonnegative")
        if self.z <= 0.0:
            raise ValidationError(f"normalization factor must be > 0, got {self.z}")
        if self.tau is not None and self.tau <= 0.0:
            raise ValidationError(f"threshold must be > 0, got {self.tau}")


def minmax(sim: SimilarityMap) -> SimilarityMap:
    """Affinely rescale a map to [0, 1]; constant maps carry no signal."""
    vals = sim.values
    vmin = float(vals.min())
    vmax = float(vals.max())
    if vmax == vmin:
        raise DegenerateMapError(
            f"similarity map is constant ({vmin}); min-max rescaling undefined"
        )
    return SimilarityMap(
        values=(vals - vmin) / (vmax - vmin),
        n_exemplars_aggregated=sim.n_exemplars_aggregated,
    )


def normalization_factor(
    s01: SimilarityMap, gmask: GlobalMask, n_exemplars: int
) -> float:
    """Mean exemplar-region response of the [0, 1] map."""
    if n_exemplars < 1:
        raise ValueError(f"n_exemplars must be >= 1, got {n_exemplars}")
    if gmask.weights.shape != s01.shape:
        raise ShapeError(
            f"mask {gmask.weights.shape} does not match map {s01.shape}"
        )
    z = float((gmask.weights * s01.values).sum()) / n_exemplars
    if z <= 1e-9:
        raise DegenerateNormalizationError(
            f"exemplar regions carry no response (z = {z:.3e})"
        )
    return z


def normalize(s01: SimilarityMap, z: float) -> DensityMap:
    """Divide the [0, 1] map by z; the result integrates like a density."""
    if z <= 0.0:
        raise ValueError(f"normalization factor must be > 0, got {z}")
    vals = s01.values / z
    total = float(vals.sum())
    return DensityMap(values=vals, z=float(z), tau=None, raw_count=total, count=total)


def unit_count(exemplars: ExemplarSet) -> float:
    """Mean per-patch unit count: number of boxes over their total patch area."""
    return len(exemplars.boxes) / sum(exemplars.areas)


def threshold_and_count(density: DensityMap, exemplars: ExemplarSet) -> DensityMap:
    """Zero cells strictly below the largest exemplar's unit count, then sum.

    tau = 1 / area(largest box); cells equal to tau survive, so an exemplar's
    own mean per-patch mass is never suppressed.  No re-normalization after
    zeroing.
    """
    tau = 1.0 / exemplars.largest_area
    vals = np.where(density.values < tau, 0.0, density.values)
    return DensityMap(
        values=vals,
        z=density.z,
        tau=tau,
        raw_count=density.raw_count,
        count=float(vals.sum()),
    )
