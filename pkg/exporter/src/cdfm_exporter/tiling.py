"""Quadrant inference: pad, split into 4**k even sub-images, run the
backbone per sub-image, reassemble the grids, crop padding rows/cols."""

from __future__ import annotations

import math

import numpy as np


def pad_to_multiple(image: np.ndarray, multiple: int) -> np.ndarray:
    """Edge-replicate right/bottom so both dims divide ``multiple``."""
    h, w = image.shape[:2]
    pad_h = math.ceil(h / multiple) * multiple - h
    pad_w = math.ceil(w / multiple) * multiple - w
    if pad_h == 0 and pad_w == 0:
        return image
    return np.pad(image, ((0, pad_h), (0, pad_w), (0, 0)), mode="edge")


def extract_grid(image: np.ndarray, resolution_level: int, backbone) -> np.ndarray:
    """Dense patch grid of ``image`` at the given quadrant level.

    ``backbone`` exposes ``patch_size`` and maps an RGB array (dims multiples
    of patch_size) to a (tokens, channels) array, non-patch tokens first.
    Returns a float32 (ceil(H/P), ceil(W/P), channels) array.
    """
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected HxWx3 RGB, got {image.shape}")
    k = resolution_level
    if k < 0:
        raise ValueError("resolution_level must be >= 0")
    p = backbone.patch_size
    n = 2 ** k
    h, w = image.shape[:2]
    padded = pad_to_multiple(image, n * p)
    qh, qw = padded.shape[0] // n, padded.shape[1] // n
    lq, vq = qh // p, qw // p
    blocks = []
    for r in range(n):
        row_blocks = []
        for c in range(n):
            sub = padded[r * qh:(r + 1) * qh, c * qw:(c + 1) * qw]
            tokens = np.asarray(backbone(sub))
            if tokens.ndim != 2:
                raise ValueError(f"backbone returned shape {tokens.shape}")
            prefix = tokens.shape[0] - lq * vq
            if prefix < 0:
                raise ValueError(
                    f"{tokens.shape[0]} tokens cannot cover a {lq}x{vq} grid"
                )
            row_blocks.append(tokens[prefix:].reshape(lq, vq, -1))
        blocks.append(row_blocks)
    if n > 1:
        stitched = np.concatenate(
            [np.concatenate(row_blocks, axis=1) for row_blocks in blocks], axis=0
        )
    else:
        stitched = blocks[0][0]
    keep_r, keep_c = math.ceil(h / p), math.ceil(w / p)
    return np.ascontiguousarray(stitched[:keep_r, :keep_c], dtype=np.float32)
