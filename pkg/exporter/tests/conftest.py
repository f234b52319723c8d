import sys
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))


@pytest.fixture
def rng():
    return np.random.default_rng(4242)


def write_image(path, rng, size=(60, 44)):
    """Random RGB image on disk; size is (width, height)."""
    w, h = size
    pixels = rng.integers(0, 256, size=(h, w, 3), dtype=np.uint8)
    Image.fromarray(pixels, mode="RGB").save(path)
    return path


@pytest.fixture
def image_dir(tmp_path, rng):
    root = tmp_path / "images"
    root.mkdir()
    write_image(root / "a.jpg", rng, size=(56, 56))
    write_image(root / "b.png", rng, size=(61, 30))
    (root / "notes.txt").write_text("not an image")
    return root
