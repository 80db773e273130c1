import numpy as np
import pytest

from redreflex.core import RgbImage


def rgb(array) -> RgbImage:
    return RgbImage(np.asarray(array, dtype=np.uint8))


def constant_image(h, w, r, g=None, b=None) -> RgbImage:
    g = r if g is None else g
    b = r if b is None else b
    arr = np.zeros((h, w, 3), dtype=np.uint8)
    arr[:, :, 0], arr[:, :, 1], arr[:, :, 2] = r, g, b
    return RgbImage(arr)


def random_image(h, w, seed) -> RgbImage:
    rng = np.random.default_rng(seed)
    return RgbImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))


@pytest.fixture
def tmp_dataset_dir(tmp_path):
    d = tmp_path / "data"
    d.mkdir()
    return d
