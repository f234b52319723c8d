"""Batch feature export: images in, CDFM v1 files out."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from . import backbones
from .cdfm import GridRecord, encode, write_atomic
from .tiling import extract_grid

logger = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff", ".webp")


@dataclass
class ExportJob:
    """One export run: a backbone, a resolution level, images, a target dir."""

    backbone: str
    resolution_level: int
    images: list = field(default_factory=list)
    out_dir: Path = Path(".")
    resize_long_side: int | None = None
    device: str = "cpu"
    check_determinism: bool = False

    def __post_init__(self):
        if self.resolution_level < 0:
            raise ValueError("resolution_level must be >= 0")
        if self.backbone not in backbones.REGISTRY:
            raise KeyError(
                f"unknown backbone {self.backbone!r}; "
                f"known: {', '.join(backbones.available())}"
            )
        self.images = [Path(p) for p in self.images]
        self.out_dir = Path(self.out_dir)


def collect_images(directory) -> list[Path]:
    root = Path(directory)
    return sorted(
        p for p in root.iterdir()
        if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES
    )


def load_rgb(path, resize_long_side: int | None = None) -> np.ndarray:
    """Image file -> float32 HxWx3 in [0, 1]; optional long-side resize."""
    with Image.open(path) as img:
        rgb = img.convert("RGB")
        if resize_long_side is not None:
            w, h = rgb.size
            scale = resize_long_side / max(w, h)
            rgb = rgb.resize(
                (max(1, round(w * scale)), max(1, round(h * scale))),
                Image.Resampling.LANCZOS,
            )
        return np.asarray(rgb, dtype=np.float32) / 255.0


def export_image(image_path, job: ExportJob, embedder) -> Path:
    rgb = load_rgb(image_path, job.resize_long_side)
    grid = extract_grid(rgb, job.resolution_level, embedder)
    record = GridRecord(
        data=grid,
        patch_size=embedder.patch_size,
        image_height=rgb.shape[0],
        image_width=rgb.shape[1],
        resolution_level=job.resolution_level,
    )
    return write_atomic(record, job.out_dir / f"{Path(image_path).stem}.cdfm")


def export_features(job: ExportJob, embedder=None) -> list[Path]:
    """Export every image of the job; per-image failures are logged and the
    job continues.  Returns the written paths.

    With ``check_determinism`` the first image is embedded twice and the two
    encodings must match byte for byte.
    """
    if embedder is None:
        _, embedder = backbones.load_backbone(job.backbone, device=job.device)
    written = []
    for index, image_path in enumerate(job.images):
        try:
            out_path = export_image(image_path, job, embedder)
        except Exception as exc:  # keep the batch going
            logger.warning("export failed for %s: %s", image_path, exc)
            continue
        if job.check_determinism and index == 0:
            rgb = load_rgb(image_path, job.resize_long_side)
            grid = extract_grid(rgb, job.resolution_level, embedder)
            record = GridRecord(
                data=grid,
                patch_size=embedder.patch_size,
                image_height=rgb.shape[0],
                image_width=rgb.shape[1],
                resolution_level=job.resolution_level,
            )
            if encode(record) != out_path.read_bytes():
                raise RuntimeError(
                    f"{job.backbone} is not deterministic on this backend "
                    f"(re-export of {image_path} differs)"
                )
            logger.info("determinism check passed for %s", image_path)
        written.append(out_path)
    return written


def export_onnx_graph(backbone_name: str, out_path, device: str = "cpu",
                      sample_hw: tuple[int, int] = (224, 224)) -> Path:
    """Export the backbone as an ONNX graph with normalization baked in.

    The graph maps float32 NCHW RGB in [0, 1] to the token sequence, so
    downstream consumers need no preprocessing knowledge.  Requires torch
    plus the onnx package, and backbone weights.
    """
    try:
        import torch
    except ImportError as exc:
        raise RuntimeError("export_onnx_graph requires torch") from exc
    spec, embedder = backbones.load_backbone(backbone_name, device=device)
    if not isinstance(embedder, backbones.TorchTokenBackbone):
        raise RuntimeError(
            f"backbone {backbone_name!r} has no torch module to export"
        )

    class _Wrapped(torch.nn.Module):
        def __init__(self, inner):
            super().__init__()
            self.inner = inner.model
            self.mean = inner._mean
            self.std = inner._std
            self.token_fn = inner.token_fn

        def forward(self, x):
            return self.token_fn(self.inner, (x - self.mean) / self.std)

    wrapped = _Wrapped(embedder)
    h, w = sample_hw
    sample = torch.zeros(1, 3, h, w, device=device)
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    torch.onnx.export(
        wrapped, (sample,), str(out_path),
        input_names=["image"], output_names=["tokens"],
        dynamic_axes={"image": {2: "height", 3: "width"}, "tokens": {1: "token"}},
        dynamo=False,
    )
    return out_path
