"""Export dense patch-feature maps from pretrained backbones as CDFM v1 files."""

from .backbones import MeanRgbBackbone, TorchTokenBackbone, available, load_backbone
from .cdfm import GridRecord, encode, read, write_atomic
from .export import (
    ExportJob,
    collect_images,
    export_features,
    export_image,
    export_onnx_graph,
    load_rgb,
)
from .tiling import extract_grid, pad_to_multiple

__version__ = "0.1.0"

__all__ = [
    "ExportJob",
    "GridRecord",
    "MeanRgbBackbone",
    "TorchTokenBackbone",
    "available",
    "collect_images",
    "encode",
    "export_features",
    "export_image",
    "export_onnx_graph",
    "extract_grid",
    "load_backbone",
    "load_rgb",
    "pad_to_multiple",
    "read",
    "write_atomic",
]
