"""Shared synthetic builders for the test suite."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from exemplarcount import FeatureMap, PixelBox  # noqa: E402


class DictSource:
    """In-memory feature source keyed by image id."""

    def __init__(self, maps):
        self.maps = dict(maps)

    def features_for(self, image_id, resolution_level=0):
        fmap = self.maps.get(image_id)
        if fmap is None:
            raise FileNotFoundError(f"no features for image {image_id!r}")
        if fmap.resolution_level != resolution_level:
            raise FileNotFoundError(
                f"{image_id}: stored level {fmap.resolution_level}, "
                f"requested {resolution_level}"
            )
        return fmap


class PatchMeanBackbone:
    """Per-patch mock backbone: each token is the mean RGB of its patch.

    Receptive-field-local by construction, so quadrant splitting at any level
    reproduces the single-pass map bit for bit.  Optionally prepends constant
    non-patch tokens to exercise prefix dropping.
    """

    def __init__(self, patch_size=14, n_prefix_tokens=0):
        self.patch_size = patch_size
        self.n_prefix_tokens = n_prefix_tokens

    def __call__(self, image):
        p = self.patch_size
        h, w, c = image.shape
        grid = image.reshape(h // p, p, w // p, p, c).mean(axis=(1, 3))
        tokens = grid.reshape(-1, c)
        if self.n_prefix_tokens:
            prefix = np.full((self.n_prefix_tokens, c), 7.5, dtype=tokens.dtype)
            tokens = np.concatenate([prefix, tokens])
        return tokens


def random_feature_map(rng, rows=6, cols=8, channels=4, patch_size=14, level=0):
    data = rng.standard_normal((rows, cols, channels)).astype(np.float32)
    return FeatureMap.from_grid(data, patch_size, resolution_level=level)


def make_planted_map(
    rng,
    n_objects,
    grid=(40, 40),
    channels=16,
    patch_size=14,
    pattern_shape=(3, 3),
    resolution_level=0,
):
    """Feature map with ``n_objects`` disjoint copies of one exemplar pattern.

    Pattern cells use mutually orthogonal channel directions (random positive
    scales); the background lives in the remaining channels, so correlation
    responds only where the pattern sits.  Returns the map plus the pixel box
    of the first planted copy (the exemplar).
    """
    rows, cols = grid
    ph, pw = pattern_shape
    n_cells = ph * pw
    assert n_cells < channels, "need spare channels for the background"

    scales = rng.uniform(0.5, 2.0, size=n_cells)
    pattern = np.zeros((ph, pw, channels), dtype=np.float64)
    for idx in range(n_cells):
        pattern[idx // pw, idx % pw, idx] = scales[idx]

    background = np.zeros((rows, cols, channels), dtype=np.float64)
    background[:, :, n_cells:] = rng.uniform(
        0.1, 1.0, size=(rows, cols, channels - n_cells)
    )

    pitch_r, pitch_c = ph + 1, pw + 1
    slots = [
        (r, c)
        for r in range(0, rows - ph + 1, pitch_r)
        for c in range(0, cols - pw + 1, pitch_c)
    ]
    assert len(slots) >= n_objects, "grid too small for that many objects"
    chosen = [slots[i] for i in rng.choice(len(slots), size=n_objects, replace=False)]

    data = background
    for r, c in chosen:
        data[r:r + ph, c:c + pw] = pattern

    r0, c0 = chosen[0]
    exemplar = PixelBox(
        x1=c0 * patch_size,
        y1=r0 * patch_size,
        x2=(c0 + pw) * patch_size,
        y2=(r0 + ph) * patch_size,
    )
    fmap = FeatureMap.from_grid(
        data.astype(np.float32), patch_size, resolution_level=resolution_level
    )
    return fmap, exemplar


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


_ACCEPTANCE_RESULTS = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" in report.nodeid and report.when == "call":
        name = report.nodeid.split("::")[-1]
        _ACCEPTANCE_RESULTS.append((name, report.passed))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed in _ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}")
