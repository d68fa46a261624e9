import numpy as np
import pytest

from uvsync import gridio
from uvsync.errors import InvalidArgument


def test_grid_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((3, 5, 7)).astype(np.float32)
    path = tmp_path / "a.f32"
    gridio.save_grid(path, arr)
    back = gridio.load_grid(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, arr)


def test_grid_casts_to_float32(tmp_path):
    arr = np.linspace(0, 1, 12, dtype=np.float64).reshape(3, 4)
    path = tmp_path / "b.f32"
    gridio.save_grid(path, arr)
    assert np.array_equal(gridio.load_grid(path), arr.astype(np.float32))


def test_grid_rejects_garbage(tmp_path):
    path = tmp_path / "c.f32"
    path.write_bytes(b"not a grid at all\n\nxxxx")
    with pytest.raises(InvalidArgument):
        gridio.load_grid(path)
    path.write_bytes(b"f32grid 1\nshape: 2 2\ndtype: float32\n\nshort")
    with pytest.raises(InvalidArgument):
        gridio.load_grid(path)


def test_image_roundtrip(tmp_path):
    img = np.zeros((3, 8, 8), dtype=np.float32)
    img[0] = 1.0
    path = tmp_path / "img.png"
    gridio.save_image(path, img, lo=0.0, hi=1.0)
    back = gridio.load_image(path)
    assert back.shape == (3, 8, 8)
    assert np.abs(back[0] - 1.0).max() < 1e-6
    assert np.abs(back[1]).max() < 1e-6


def test_to_image_u8_handles_inf():
    arr = np.array([[0.0, 1.0], [np.inf, 0.5]])
    u8 = gridio.to_image_u8(arr, lo=0.0, hi=1.0)
    assert u8[1, 0] == 0
    assert u8[0, 1] == 255
