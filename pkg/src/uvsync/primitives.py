"""Procedural meshes and texture patterns used by demos and tests."""

from __future__ import annotations

import math

import numpy as np

from .geometry import MeshSequence


def make_quad(size: float = 1.0, z: float = 0.0,
              uv_rect: tuple[float, float, float, float] = (0.0, 0.0, 1.0, 1.0),
              frames: int = 1) -> MeshSequence:
    """Square in the XY plane facing +Z, UV-mapped onto uv_rect of the atlas."""
    h = size / 2.0
    verts = np.array(
        [[-h, -h, z], [h, -h, z], [h, h, z], [-h, h, z]], dtype=np.float64
    )
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    u0, v0, u1, v1 = uv_rect
    uv = np.array([[u0, v0], [u1, v0], [u1, v1], [u0, v1]], dtype=np.float64)
    corner_uvs = uv[faces.astype(np.int64)]
    return MeshSequence(np.repeat(verts[None], frames, axis=0), faces, corner_uvs)


def make_plane_pair(gap: float = 1.0, size: float = 1.0) -> MeshSequence:
    """Two parallel +Z-facing squares, the first in front of the second.

    The front plane occupies the left part of the atlas (u in [0, 0.45]),
    the back plane the right part (u in [0.55, 1]); a head-on camera sees
    only the front plane wherever they overlap.
    """
    front = make_quad(size=size, z=gap / 2.0, uv_rect=(0.0, 0.0, 0.45, 1.0))
    back = make_quad(size=size, z=-gap / 2.0, uv_rect=(0.55, 0.0, 1.0, 1.0))
    verts = np.concatenate([front.vertices[0], back.vertices[0]], axis=0)
    faces = np.concatenate([front.faces, back.faces + 4], axis=0)
    uvs = np.concatenate([front.corner_uvs, back.corner_uvs], axis=0)
    return MeshSequence(verts[None], faces, uvs)


def make_cube(size: float = 1.0, frames: int = 1) -> MeshSequence:
    """Axis-aligned cube, 8 vertices / 12 faces, unwrapped to a 4x2 chart grid."""
    h = size / 2.0
    verts = np.array(
        [
            [-h, -h, -h], [h, -h, -h], [h, h, -h], [-h, h, -h],
            [-h, -h, h], [h, -h, h], [h, h, h], [-h, h, h],
        ],
        dtype=np.float64,
    )
    # quads wound CCW seen from outside
    quads = [
        (4, 5, 6, 7),  # +Z
        (1, 0, 3, 2),  # -Z
        (5, 1, 2, 6),  # +X
        (0, 4, 7, 3),  # -X
        (7, 6, 2, 3),  # +Y
        (0, 1, 5, 4),  # -Y
    ]
    faces = []
    corner_uvs = []
    margin = 0.02
    for qi, quad in enumerate(quads):
        col, row = qi % 4, qi // 4
        u0 = col / 4.0 + margin
        u1 = (col + 1) / 4.0 - margin
        v0 = row / 2.0 + margin
        v1 = (row + 1) / 2.0 - margin
        uv = [(u0, v0), (u1, v0), (u1, v1), (u0, v1)]
        for tri in ((0, 1, 2), (0, 2, 3)):
            faces.append([quad[i] for i in tri])
            corner_uvs.append([uv[i] for i in tri])
    return MeshSequence(
        np.repeat(verts[None], frames, axis=0),
        np.asarray(faces, dtype=np.int32),
        np.asarray(corner_uvs, dtype=np.float64),
    )


def make_sphere(radius: float = 1.0, n_lat: int = 16, n_lon: int = 24,
                frames: int = 1, wobble: float = 0.0) -> MeshSequence:
    """Lat-long sphere whose UV atlas covers the full unit square.

    Vertices are laid out on an (n_lat+1) x (n_lon+1) grid; the seam column
    duplicates positions so every UV stays inside [0, 1]. With wobble > 0
    the frames breathe radially, giving a deterministic animation.
    """
    # single vertex per pole so normals accumulate over every adjacent face;
    # interior rows duplicate the seam column so UVs stay inside [0, 1]
    rows = []
    for i in range(1, n_lat):
        theta = np.pi * i / n_lat
        phi = 2.0 * np.pi * np.arange(n_lon + 1) / n_lon
        rows.append(np.stack(
            [np.sin(theta) * np.sin(phi),
             np.full(n_lon + 1, np.cos(theta)),
             np.sin(theta) * np.cos(phi)], axis=-1))
    base = np.concatenate([[[0.0, 1.0, 0.0], [0.0, -1.0, 0.0]],
                           np.concatenate(rows)], axis=0)

    def vid(i, j):
        if i == 0:
            return 0
        if i == n_lat:
            return 1
        return 2 + (i - 1) * (n_lon + 1) + j

    faces = []
    uvs = []

    def uv(i, j):
        return (j / n_lon, 1.0 - i / n_lat)

    # Pole-row triangles are degenerate in 3D but keep their UV footprint,
    # so the atlas tiles the full unit square.
    for i in range(n_lat):
        for j in range(n_lon):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            faces.append([a, b, d])
            uvs.append([uv(i, j), uv(i + 1, j), uv(i, j + 1)])
            faces.append([b, c, d])
            uvs.append([uv(i + 1, j), uv(i + 1, j + 1), uv(i, j + 1)])

    verts = []
    for k in range(frames):
        scale = radius
        if wobble:
            scale = radius * (1.0 + wobble * math.sin(2.0 * math.pi * k / max(frames, 1)))
        verts.append(base * scale)
    return MeshSequence(
        np.stack(verts),
        np.asarray(faces, dtype=np.int32),
        np.asarray(uvs, dtype=np.float64),
    )


def smooth_field(resolution: int, channels: int = 3, seed: int = 0,
                 contrast: float = 0.35) -> np.ndarray:
    """Pole-safe low-frequency target texture, values well inside [0, 1].

    The horizontal variation is damped by sin(pi*v)**2 so textures stay
    single-valued where a lat-long atlas pinches at the poles.
    """
    rng = np.random.default_rng(seed)
    r = resolution
    jj = (np.arange(r) + 0.5) / r
    ii = 1.0 - (np.arange(r) + 0.5) / r
    u, v = np.meshgrid(jj, ii, indexing="xy")
    out = np.empty((channels, r, r), dtype=np.float64)
    damp = np.sin(np.pi * v) ** 2
    for c in range(channels):
        phase_u, phase_v = rng.uniform(0.0, 2.0 * np.pi, size=2)
        out[c] = (
            0.5
            + contrast * np.sin(2.0 * np.pi * u + phase_u) * damp
            + 0.3 * contrast * np.cos(np.pi * v + phase_v)
        )
    return np.clip(out, 0.02, 0.98).astype(np.float32)


def checkerboard(resolution: int, cells: int = 8, channels: int = 3,
                 lo: float = 0.1, hi: float = 0.9) -> np.ndarray:
    """Axis-aligned checkerboard texture, (channels, R, R) float32."""
    idx = np.arange(resolution) * cells // resolution
    board = (idx[:, None] + idx[None, :]) % 2
    values = np.where(board == 0, lo, hi).astype(np.float32)
    return np.repeat(values[None], channels, axis=0)
