"""Feature-map container, CDFM file format, and quadrant-based extraction.

CDFM v1 byte layout (all integers little-endian)::

    offset  size  field
    0       4     magic b"CDFM"
    4       2     version, currently 1
    6       2     patch_size (pixels)
    8       4     rows
    12      4     cols
    16      4     channels
    20      4     image_height (original pixels)
    24      4     image_width
    28      4     effective_height (pixel extent covered by the grid)
    32      4     effective_width
    36      2     resolution_level
    38      2     reserved, 0
    40      ...   rows*cols*channels float32, index ((row*cols)+col)*channels + channel

A feature map at resolution level k was produced by splitting the padded
image into 4**k even quadrants, running the backbone once per quadrant, and
reassembling the per-quadrant grids.  The grid pitch stays ``patch_size``
pixels of the original image at every level; trailing rows/cols that exist
only because of padding are cropped, so rows == ceil(effective_height /
patch_size) with effective_height == ceil(image_height / patch_size) *
patch_size (and likewise for columns).
"""

from __future__ import annotations

import math
import struct
import threading
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, runtime_checkable

import numpy as np

from .errors import CorruptionError, FormatError, ShapeError, ValidationError

CDFM_MAGIC = b"CDFM"
CDFM_VERSION = 1
_HEADER = struct.Struct("<4sHHIIIIIIIHH")


@dataclass(frozen=True)
class FeatureMap:
    """Dense rows x cols x channels patch-feature tensor with image geometry.

    Immutable after construction and safe to share across threads.
    """

    data: np.ndarray
    patch_size: int
    image_height: int
    image_width: int
    effective_height: int
    effective_width: int
    resolution_level: int = 0

    def __post_init__(self):
        data = np.ascontiguousarray(self.data, dtype=np.float32)
        object.__setattr__(self, "data", data)
        if data.ndim != 3:
            raise ValidationError(f"feature map must be 3-d, got shape {data.shape}")
        if min(data.shape) < 1:
            raise ValidationError(f"feature map dims must be >= 1, got {data.shape}")
        if not np.isfinite(data).all():
            raise ValidationError("feature map contains non-finite values")
        if self.patch_size < 1:
            raise ValidationError(f"patch_size must be >= 1, got {self.patch_size}")
        if self.resolution_level < 0:
            raise ValidationError(
                f"resolution_level must be >= 0, got {self.resolution_level}"
            )
        if self.image_height < 1 or self.image_width < 1:
            raise ValidationError("image dims must be positive")
        if (
            self.effective_height < self.image_height
            or self.effective_width < self.image_width
        ):
            raise ValidationError("effective dims cannot be smaller than image dims")
        rows = math.ceil(self.effective_height / self.patch_size)
        cols = math.ceil(self.effective_width / self.patch_size)
        if (rows, cols) != data.shape[:2]:
            raise ValidationError(
                f"grid {data.shape[:2]} inconsistent with effective dims "
                f"{self.effective_height}x{self.effective_width} at patch "
                f"{self.patch_size} (expected {rows}x{cols})"
            )

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def grid_shape(self) -> tuple[int, int]:
        return self.data.shape[0], self.data.shape[1]

    @classmethod
    def from_grid(
        cls, data: np.ndarray, patch_size: int, resolution_level: int = 0
    ) -> "FeatureMap":
        """Wrap a bare grid, synthesizing pixel geometry as rows*patch_size."""
        arr = np.asarray(data)
        if arr.ndim != 3:
            raise ValidationError(f"feature grid must be 3-d, got shape {arr.shape}")
        h = arr.shape[0] * patch_size
        w = arr.shape[1] * patch_size
        return cls(
            data=arr,
            patch_size=patch_size,
            image_height=h,
            image_width=w,
            effective_height=h,
            effective_width=w,
            resolution_level=resolution_level,
        )


@runtime_checkable
class PatchBackbone(Protocol):
    """Anything that turns an RGB image into a token sequence.

    ``__call__`` receives an H x W x 3 array whose dims are multiples of
    ``patch_size`` and returns a (tokens, channels) array with any non-patch
    tokens (class/register) first, followed by patch tokens in row-major
    order.
    """

    patch_size: int

    def __call__(self, image: np.ndarray) -> np.ndarray: ...


def save_feature_map(fmap: FeatureMap, path) -> None:
    """Write ``fmap`` as a CDFM v1 file; loading it back is bit-identical."""
    data = np.ascontiguousarray(fmap.data, dtype="<f4")
    if not np.isfinite(data).all():  # data buffer may have been mutated
        raise ValidationError("feature map contains non-finite values")
    header = _HEADER.pack(
        CDFM_MAGIC,
        CDFM_VERSION,
        fmap.patch_size,
        fmap.rows,
        fmap.cols,
        fmap.channels,
        fmap.image_height,
        fmap.image_width,
        fmap.effective_height,
        fmap.effective_width,
        fmap.resolution_level,
        0,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(data.tobytes())


def load_feature_map(path) -> FeatureMap:
    """Read a CDFM v1 file, validating magic, size, and payload finiteness."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != CDFM_MAGIC:
        raise FormatError(f"{path}: bad magic {blob[:4]!r}, expected {CDFM_MAGIC!r}")
    if len(blob) < _HEADER.size:
        raise CorruptionError(f"{path}: truncated header ({len(blob)} bytes)")
    (
        _magic,
        version,
        patch_size,
        rows,
        cols,
        channels,
        image_h,
        image_w,
        eff_h,
        eff_w,
        level,
        _reserved,
    ) = _HEADER.unpack_from(blob)
    if version != CDFM_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = rows * cols * channels * 4
    payload = blob[_HEADER.size:]
    if len(payload) < expected:
        raise CorruptionError(
            f"{path}: payload is {len(payload)} bytes, header promises {expected}"
        )
    if len(payload) > expected:
        raise CorruptionError(
            f"{path}: {len(payload) - expected} trailing bytes after payload"
        )
    data = np.frombuffer(payload, dtype="<f4").reshape(rows, cols, channels).copy()
    return FeatureMap(
        data=data,
        patch_size=patch_size,
        image_height=image_h,
        image_width=image_w,
        effective_height=eff_h,
        effective_width=eff_w,
        resolution_level=level,
    )


def stitch_quadrants(quadrants, resolution_level: int) -> FeatureMap:
    """Reassemble a 2**k x 2**k grid of even quadrant maps into one map.

    Output cell (r*Lq + i, c*Vq + j) equals quadrant (r, c) cell (i, j); the
    operation is a pure spatial rearrangement of the input feature vectors.
    """
    k = resolution_level
    if k < 0:
        raise ValueError(f"resolution_level must be >= 0, got {k}")
    n = 2 ** k
    grid = [list(row) for row in quadrants]
    if len(grid) != n or any(len(row) != n for row in grid):
        raise ShapeError(f"expected a {n}x{n} quadrant grid for level {k}")
    if k == 0:
        return grid[0][0]
    ref = grid[0][0]
    for row in grid:
        for q in row:
            if q.data.shape != ref.data.shape or q.patch_size != ref.patch_size:
                raise ShapeError(
                    f"quadrant {q.data.shape}/P={q.patch_size} differs from "
                    f"{ref.data.shape}/P={ref.patch_size}"
                )
    lq, vq, d = ref.data.shape
    out = np.empty((n * lq, n * vq, d), dtype=np.float32)
    for r, row in enumerate(grid):
        for c, q in enumerate(row):
            out[r * lq:(r + 1) * lq, c * vq:(c + 1) * vq] = q.data
    return FeatureMap.from_grid(out, ref.patch_size, resolution_level=k)


def extract_quadrant_features(
    image: np.ndarray, resolution_level: int, backbone: PatchBackbone
) -> FeatureMap:
    """Run ``backbone`` over 4**k even quadrants of ``image`` and stitch.

    The image is padded right/bottom by edge replication to a multiple of
    2**k * patch_size, each quadrant is processed independently, non-patch
    tokens are dropped, the per-quadrant grids are stitched, and trailing
    rows/cols that exist only because of padding are cropped away.
    """
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ShapeError(f"expected an HxWx3 RGB image, got shape {img.shape}")
    k = resolution_level
    if k < 0:
        raise ValueError(f"resolution_level must be >= 0, got {k}")
    p = backbone.patch_size
    n = 2 ** k
    h, w = img.shape[:2]
    unit = n * p
    pad_h = math.ceil(h / unit) * unit - h
    pad_w = math.ceil(w / unit) * unit - w
    padded = np.pad(img, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")
    qh, qw = padded.shape[0] // n, padded.shape[1] // n
    lq, vq = qh // p, qw // p
    grid = []
    for r in range(n):
        row = []
        for c in range(n):
            sub = padded[r * qh:(r + 1) * qh, c * qw:(c + 1) * qw]
            tokens = np.asarray(backbone(sub))
            if tokens.ndim != 2:
                raise ShapeError(
                    f"backbone must return (tokens, channels), got {tokens.shape}"
                )
            prefix = tokens.shape[0] - lq * vq
            if prefix < 0:
                raise ShapeError(
                    f"backbone returned {tokens.shape[0]} tokens for a "
                    f"{lq}x{vq} patch grid"
                )
            patch_tokens = tokens[prefix:].reshape(lq, vq, tokens.shape[1])
            row.append(FeatureMap.from_grid(patch_tokens, p))
        grid.append(row)
    stitched = stitch_quadrants(grid, k)
    keep_rows = math.ceil(h / p)
    keep_cols = math.ceil(w / p)
    return FeatureMap(
        data=stitched.data[:keep_rows, :keep_cols],
        patch_size=p,
        image_height=h,
        image_width=w,
        effective_height=keep_rows * p,
        effective_width=keep_cols * p,
        resolution_level=k,
    )


class FileSource:
    """Feature provider backed by a directory of CDFM files.

    For image id ``X`` and level ``k`` the lookup tries, in order:
    ``root/k{k}/{X}.cdfm``, ``root/{X}.k{k}.cdfm``, ``root/{X}.cdfm`` (and the
    same three with the file extension of ``X`` stripped).  The loaded file
    must record the requested resolution level.
    """

    def __init__(self, root):
        self.root = Path(root)

    def _candidates(self, image_id: str, level: int):
        stems = [image_id]
        bare = Path(image_id).stem
        if bare and bare != image_id:
            stems.append(bare)
        for stem in stems:
            yield self.root / f"k{level}" / f"{stem}.cdfm"
            yield self.root / f"{stem}.k{level}.cdfm"
            yield self.root / f"{stem}.cdfm"
        if image_id.endswith(".cdfm"):
            yield self.root / image_id

    def features_for(self, image_id: str, resolution_level: int = 0) -> FeatureMap:
        tried = []
        for cand in self._candidates(str(image_id), resolution_level):
            if cand.is_file():
                fmap = load_feature_map(cand)
                if fmap.resolution_level != resolution_level:
                    raise ValidationError(
                        f"{cand} was exported at level {fmap.resolution_level}, "
                        f"requested {resolution_level}"
                    )
                return fmap
            tried.append(str(cand))
        raise FileNotFoundError(
            f"no feature file for image {image_id!r} at level {resolution_level}; "
            f"tried: {', '.join(tried)}"
        )


class OnnxSource:
    """Feature provider that runs an exported backbone graph per quadrant.

    Graph contract: input is float32 NCHW RGB in [0, 1] with any value
    normalization baked into the graph; the first output holds the token
    sequence (1, tokens, channels) or (tokens, channels) with non-patch
    tokens first.  A single session is serialized behind a lock; use one
    source per thread for parallel inference.
    """

    def __init__(self, model_path, patch_size: int, image_root=None, providers=None):
        try:
            import onnxruntime as ort
        except ImportError as exc:  # pragma: no cover - optional dependency
            raise ImportError(
                "OnnxSource requires the optional onnxruntime dependency "
                "(pip install exemplarcount[onnx])"
            ) from exc
        self.patch_size = int(patch_size)
        self.image_root = Path(image_root) if image_root is not None else None
        self._session = ort.InferenceSession(
            str(model_path), providers=providers or ["CPUExecutionProvider"]
        )
        self._input_name = self._session.get_inputs()[0].name
        self._lock = threading.Lock()

    def __call__(self, image: np.ndarray) -> np.ndarray:
        nchw = np.ascontiguousarray(image.transpose(2, 0, 1)[None], dtype=np.float32)
        with self._lock:
            tokens = self._session.run(None, {self._input_name: nchw})[0]
        tokens = np.asarray(tokens)
        if tokens.ndim == 3:
            tokens = tokens[0]
        return tokens

    def features_for(self, image_id, resolution_level: int = 0) -> FeatureMap:
        from PIL import Image

        path = Path(image_id)
        if self.image_root is not None:
            path = self.image_root / path
        with Image.open(path) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float32) / 255.0
        return extract_quadrant_features(rgb, resolution_level, self)
