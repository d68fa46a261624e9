"""Shared scene builders for the test suite."""

from __future__ import annotations

import math

import numpy as np

from uvsync.geometry import Camera, CameraRig, orbit_camera
from uvsync.primitives import make_quad


def aligned_quad_setup(resolution: int, size: float = 1.0, distance: float = 4.0,
                       channels: int = 3):
    """A quad and camera whose pixel grid maps exactly onto the texel grid.

    The quad spans the frustum exactly at its depth, so pixel (i, j) of an
    LxL image rays through texel (i, j) center of an LxL texture.
    """
    fov = 2.0 * math.atan((size / 2.0) / distance)
    quad = make_quad(size=size)
    cam = Camera(position=(0.0, 0.0, distance), vertical_fov=fov,
                 resolution=(resolution, resolution))
    return quad, cam


def tetra_rig(radius: float = 3.0, resolution: int = 96) -> CameraRig:
    """Four cameras with alternating elevation, covering a centered object."""
    cams = tuple(
        orbit_camera(radius, math.radians(az), math.radians(el),
                     resolution=(resolution, resolution))
        for az, el in [(0, 35), (90, -35), (180, 35), (270, -35)]
    )
    return CameraRig(cams)


def frontal_rig(count: int, distance: float = 4.0, fov: float = 0.3,
                resolution: int = 64) -> CameraRig:
    """Cameras fanned slightly around +Z, all seeing a +Z-facing quad."""
    spreads = [(0, 0), (10, 4), (-10, -4), (20, -6), (-20, 6), (5, -10),
               (-15, 8), (15, 8)]
    cams = []
    for az_deg, el_deg in spreads[:count]:
        az, el = math.radians(az_deg), math.radians(el_deg)
        pos = (distance * math.sin(az) * math.cos(el),
               distance * math.sin(el),
               distance * math.cos(az) * math.cos(el))
        cams.append(Camera(position=pos, vertical_fov=fov,
                           resolution=(resolution, resolution)))
    return CameraRig(tuple(cams))


def rms(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.sqrt(np.mean((np.asarray(a, np.float64) - np.asarray(b, np.float64)) ** 2)))
