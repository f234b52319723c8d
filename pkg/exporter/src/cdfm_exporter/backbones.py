"""Backbone registry.

Every entry loads lazily and yields an embedder with a ``patch_size``
attribute and ``__call__(rgb: HxWx3 float32 in [0, 1]) -> (tokens, channels)``
returning non-patch tokens (class/register) first.  Pretrained checkpoints
come from torch hub (or open_clip for the CLIP entries) and need network
access on first use; ``debug-mean-rgb`` is a weight-free stand-in for smoke
tests of the export machinery.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)


@dataclass(frozen=True)
class BackboneSpec:
    name: str
    patch_size: int
    embed_dim: int
    mean: tuple
    std: tuple
    loader: Callable


class MeanRgbBackbone:
    """Patch token = mean RGB of the patch; deterministic, weight-free."""

    def __init__(self, patch_size: int = 14):
        self.patch_size = patch_size
        self.embed_dim = 3

    def __call__(self, image: np.ndarray) -> np.ndarray:
        p = self.patch_size
        h, w, c = image.shape
        grid = image.reshape(h // p, p, w // p, p, c).mean(axis=(1, 3))
        return grid.reshape(-1, c).astype(np.float32)


class TorchTokenBackbone:
    """Adapter from a torch module to the numpy embedder protocol.

    ``token_fn(model, nchw_tensor)`` must return the (1, tokens, channels)
    or (tokens, channels) token tensor, non-patch tokens first.
    """

    def __init__(self, model, token_fn, patch_size, mean, std, device="cpu"):
        import torch

        self._torch = torch
        self.patch_size = patch_size
        self.device = device
        self.model = model.eval().to(device)
        self.token_fn = token_fn
        self._mean = torch.tensor(mean, device=device).view(1, 3, 1, 1)
        self._std = torch.tensor(std, device=device).view(1, 3, 1, 1)

    def __call__(self, image: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.no_grad():
            x = torch.from_numpy(
                np.ascontiguousarray(image.transpose(2, 0, 1)[None])
            ).to(self.device)
            x = (x - self._mean) / self._std
            tokens = self.token_fn(self.model, x)
        tokens = tokens.detach().cpu().numpy()
        if tokens.ndim == 3:
            tokens = tokens[0]
        return np.asarray(tokens, dtype=np.float32)


def _dino_tokens(model, x):
    # v1 ViTs emit [cls, patch...] from the last block
    return model.get_intermediate_layers(x, n=1)[0]


def _dinov2_tokens(model, x):
    return model.forward_features(x)["x_norm_patchtokens"]


def _vit_sequence_tokens(model, x):
    return model.forward_features(x)


def _load_torch_hub(repo, entry, token_fn, spec_name):
    def load(spec: BackboneSpec, device: str):
        try:
            import torch
        except ImportError as exc:
            raise RuntimeError(
                f"backbone {spec_name} needs torch (pip install cdfm-exporter[backbones])"
            ) from exc
        model = torch.hub.load(repo, entry)
        return TorchTokenBackbone(
            model, token_fn, spec.patch_size, spec.mean, spec.std, device=device
        )

    return load


def _load_open_clip(model_name, pretrained):
    def load(spec: BackboneSpec, device: str):
        try:
            import open_clip
            import torch  # noqa: F401
        except ImportError as exc:
            raise RuntimeError(
                f"backbone {spec.name} needs the open-clip-torch package"
            ) from exc
        model, _, _ = open_clip.create_model_and_transforms(
            model_name, pretrained=pretrained
        )

        def tokens(m, x):
            _, token_seq = m.visual(x, output_tokens=True)
            return token_seq

        return TorchTokenBackbone(
            model, tokens, spec.patch_size, spec.mean, spec.std, device=device
        )

    return load


def _load_mock(spec: BackboneSpec, device: str):
    return MeanRgbBackbone(patch_size=spec.patch_size)


def _entry(name, patch, dim, loader, mean=IMAGENET_MEAN, std=IMAGENET_STD):
    return name, BackboneSpec(name, patch, dim, mean, std, loader)


REGISTRY = dict(
    [
        _entry("dino-vitb8", 8, 768,
               _load_torch_hub("facebookresearch/dino:main", "dino_vitb8",
                               _dino_tokens, "dino-vitb8")),
        _entry("dinov2-vits14", 14, 384,
               _load_torch_hub("facebookresearch/dinov2", "dinov2_vits14",
                               _dinov2_tokens, "dinov2-vits14")),
        _entry("dinov2-vitb14", 14, 768,
               _load_torch_hub("facebookresearch/dinov2", "dinov2_vitb14",
                               _dinov2_tokens, "dinov2-vitb14")),
        _entry("dinov2-vitl14", 14, 1024,
               _load_torch_hub("facebookresearch/dinov2", "dinov2_vitl14",
                               _dinov2_tokens, "dinov2-vitl14")),
        _entry("dinov2-vitl14-reg", 14, 1024,
               _load_torch_hub("facebookresearch/dinov2", "dinov2_vitl14_reg",
                               _dinov2_tokens, "dinov2-vitl14-reg")),
        _entry("mae-vitb16", 16, 768,
               _load_torch_hub("facebookresearch/mae", "mae_vit_base_patch16",
                               _vit_sequence_tokens, "mae-vitb16")),
        _entry("mae-vitl16", 16, 1024,
               _load_torch_hub("facebookresearch/mae", "mae_vit_large_patch16",
                               _vit_sequence_tokens, "mae-vitl16")),
        _entry("clip-vitb16", 16, 768,
               _load_open_clip("ViT-B-16", "openai"), CLIP_MEAN, CLIP_STD),
        _entry("clip-vitl14", 14, 1024,
               _load_open_clip("ViT-L-14", "openai"), CLIP_MEAN, CLIP_STD),
        _entry("debug-mean-rgb", 14, 3, _load_mock),
    ]
)


def available() -> list[str]:
    return sorted(REGISTRY)


def load_backbone(name: str, device: str = "cpu"):
    spec = REGISTRY.get(name)
    if spec is None:
        raise KeyError(f"unknown backbone {name!r}; known: {', '.join(available())}")
    return spec, spec.loader(spec, device)
