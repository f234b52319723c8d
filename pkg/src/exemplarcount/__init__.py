"""Training-free exemplar-based object counting on dense patch-feature maps."""

from .baseline import DetectionSet, filter_count, load_detections, prototype
from .density import (
    DensityMap,
    ExemplarSet,
    minmax,
    normalization_factor,
    normalize,
    threshold_and_count,
    unit_count,
)
from .errors import (
    CorruptionError,
    CountingError,
    DegenerateMapError,
    DegenerateNormalizationError,
    EvaluationError,
    FormatError,
    GeometryError,
    ShapeError,
    ValidationError,
)
from .evalharness import (
    AnnotationRecord,
    EvalReport,
    compute_mae_rmse,
    evaluate,
    parse_carpk,
    parse_fsc147,
)
from .geometry import (
    EllipticalMask,
    GlobalMask,
    PatchBox,
    PixelBox,
    accumulate_global_mask,
    elliptical_mask,
    snap_box,
    uniform_mask,
)
from .matching import (
    ExemplarKernel,
    SimilarityMap,
    aggregate,
    correlate,
    extract_kernel,
    l2_normalize_features,
)
from .pipeline import (
    CountResult,
    PipelineConfig,
    count_image,
    export_density,
)
from .tensorio import (
    FeatureMap,
    FileSource,
    OnnxSource,
    extract_quadrant_features,
    load_feature_map,
    save_feature_map,
    stitch_quadrants,
)

__version__ = "0.1.0"

__all__ = [
    "AnnotationRecord",
    "CorruptionError",
    "CountResult",
    "CountingError",
    "DegenerateMapError",
    "DegenerateNormalizationError",
    "DensityMap",
    "DetectionSet",
    "EllipticalMask",
    "EvalReport",
    "EvaluationError",
    "ExemplarKernel",
    "ExemplarSet",
    "FeatureMap",
    "FileSource",
    "FormatError",
    "GeometryError",
    "GlobalMask",
    "OnnxSource",
    "PatchBox",
    "PipelineConfig",
    "PixelBox",
    "ShapeError",
    "SimilarityMap",
    "ValidationError",
    "accumulate_global_mask",
    "aggregate",
    "compute_mae_rmse",
    "correlate",
    "count_image",
    "elliptical_mask",
    "evaluate",
    "export_density",
    "extract_kernel",
    "extract_quadrant_features",
    "filter_count",
    "l2_normalize_features",
    "load_detections",
    "load_feature_map",
    "minmax",
    "normalization_factor",
    "normalize",
    "parse_carpk",
    "parse_fsc147",
    "prototype",
    "save_feature_map",
    "snap_box",
    "stitch_quadrants",
    "threshold_and_count",
    "uniform_mask",
    "unit_count",
]
