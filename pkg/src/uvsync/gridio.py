"""Raw float grid and debug image serialization.

Grid files hold little-endian C-order float32 data behind a small
structured-text header (magic line, shape, dtype, blank separator).
The format is intentionally trivial so other tools and languages can
read the dumps without a library.
"""

from __future__ import annotations

import os

import numpy as np
from PIL import Image

from .errors import InvalidArgument

_MAGIC = b"f32grid 1"


def save_grid(path: str | os.PathLike, array: np.ndarray) -> None:
    """Write an array as a float32 grid file (values cast to float32)."""
    arr = np.ascontiguousarray(array, dtype="<f4")
    header = b"\n".join(
        [
            _MAGIC,
            b"shape: " + " ".join(str(n) for n in arr.shape).encode(),
            b"dtype: float32",
        ]
    )
    with open(path, "wb") as fh:
        fh.write(header + b"\n\n")
        fh.write(arr.tobytes())


def load_grid(path: str | os.PathLike) -> np.ndarray:
    """Read a float32 grid file written by :func:`save_grid`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    sep = blob.find(b"\n\n")
    if sep < 0:
        raise InvalidArgument(f"{path}: missing grid header terminator")
    lines = blob[:sep].split(b"\n")
    if not lines or lines[0] != _MAGIC:
        raise InvalidArgument(f"{path}: not a float32 grid file")
    fields = {}
    for line in lines[1:]:
        key, _, value = line.partition(b":")
        fields[key.strip()] = value.strip()
    if fields.get(b"dtype", b"") != b"float32":
        raise InvalidArgument(f"{path}: unsupported dtype {fields.get(b'dtype')!r}")
    shape = tuple(int(tok) for tok in fields[b"shape"].split())
    payload = blob[sep + 2 :]
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise InvalidArgument(
            f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()


def to_image_u8(array: np.ndarray, lo: float | None = None, hi: float | None = None) -> np.ndarray:
    """Map a (H, W) or (C, H, W) float array to uint8 for image dumps.

    Non-finite entries map to 0. If lo/hi are omitted the finite value
    range of the array is used (a constant array maps to mid-gray).
    """
    arr = np.asarray(array, dtype=np.float64)
    if arr.ndim == 3:
        arr = np.moveaxis(arr, 0, -1)
    finite = np.isfinite(arr)
    if lo is None:
        lo = float(arr[finite].min()) if finite.any() else 0.0
    if hi is None:
        hi = float(arr[finite].max()) if finite.any() else 1.0
    if hi <= lo:
        scaled = np.full(arr.shape, 0.5)
    else:
        scaled = (arr - lo) / (hi - lo)
    scaled[~finite] = 0.0
    return (np.clip(scaled, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(path: str | os.PathLike, array: np.ndarray,
               lo: float | None = None, hi: float | None = None) -> None:
    """Save a (H, W) grayscale or (C, H, W) color array as PNG."""
    u8 = to_image_u8(array, lo=lo, hi=hi)
    if u8.ndim == 3 and u8.shape[-1] == 1:
        u8 = u8[..., 0]
    if u8.ndim == 3 and u8.shape[-1] == 2:
        u8 = np.concatenate([u8, np.zeros_like(u8[..., :1])], axis=-1)
    if u8.ndim == 3 and u8.shape[-1] > 3:
        u8 = u8[..., :3]
    Image.fromarray(u8).save(path)


def load_image(path: str | os.PathLike) -> np.ndarray:
    """Load an image file as a (C, H, W) float32 array in [0, 1]."""
    img = np.asarray(Image.open(path).convert("RGB"), dtype=np.float32) / 255.0
    return np.moveaxis(img, -1, 0)
