"""Mesh sequences, UV atlases, and the camera rig.

A mesh sequence is K frames of an animated triangle mesh with shared
topology: the face list and the per-face-corner UV coordinates are
identical across frames, only vertex positions move. UV coordinates
use the OBJ convention with the origin at the bottom-left of the
texture and values inside the unit square.

World space is right-handed with +Y up. Azimuth 0 looks down the +Z
axis toward the origin.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgument, TopologyMismatch, UvMissing

DEFAULT_FRAME_PATTERN = "frame_%04d.obj"


@dataclass(frozen=True)
class FrameMesh:
    """A single frame of a mesh sequence, with lazily computed normals."""

    vertices: np.ndarray        # (N, 3) float64
    faces: np.ndarray           # (F, 3) int32
    corner_uvs: np.ndarray      # (F, 3, 2) float64
    scene_extent: float         # diagonal of the sequence union AABB
    _normals: list = field(default_factory=list, repr=False, compare=False)

    @property
    def normals(self) -> np.ndarray:
        """(N, 3) area-weighted vertex normals, unit length."""
        if not self._normals:
            self._normals.append(vertex_normals(self.vertices, self.faces))
        return self._normals[0]

    def corner_positions(self) -> np.ndarray:
        return self.vertices[self.faces]

    def corner_normals(self) -> np.ndarray:
        return self.normals[self.faces]


class MeshSequence:
    """K animated mesh frames sharing one triangle list and UV atlas."""

    def __init__(self, vertices: np.ndarray, faces: np.ndarray, corner_uvs: np.ndarray):
        vertices = np.asarray(vertices, dtype=np.float64)
        faces = np.asarray(faces, dtype=np.int32)
        corner_uvs = np.asarray(corner_uvs, dtype=np.float64)
        if vertices.ndim != 3 or vertices.shape[2] != 3:
            raise InvalidArgument(f"vertices must be (K, N, 3), got {vertices.shape}")
        if vertices.shape[0] < 1:
            raise InvalidArgument("a mesh sequence needs at least one frame")
        if faces.ndim != 2 or faces.shape[1] != 3:
            raise InvalidArgument(f"faces must be (F, 3), got {faces.shape}")
        if corner_uvs.shape != (faces.shape[0], 3, 2):
            raise InvalidArgument(
                f"corner_uvs must be (F, 3, 2) matching faces, got {corner_uvs.shape}"
            )
        if faces.size and (faces.min() < 0 or faces.max() >= vertices.shape[1]):
            raise InvalidArgument("face index out of range")
        if corner_uvs.size and (corner_uvs.min() < 0.0 or corner_uvs.max() > 1.0):
            raise InvalidArgument("UV coordinates must lie inside the unit square")
        self.vertices = vertices
        self.faces = faces
        self.corner_uvs = corner_uvs
        self.vertices.setflags(write=False)
        self.faces.setflags(write=False)
        self.corner_uvs.setflags(write=False)
        lo = vertices.min(axis=(0, 1)) if vertices.size else np.zeros(3)
        hi = vertices.max(axis=(0, 1)) if vertices.size else np.zeros(3)
        self.bounds = (lo, hi)
        self.scene_extent = float(np.linalg.norm(hi - lo))
        self._frames: dict[int, FrameMesh] = {}

    @property
    def frame_count(self) -> int:
        return self.vertices.shape[0]

    @property
    def face_count(self) -> int:
        return self.faces.shape[0]

    def frame(self, k: int) -> FrameMesh:
        if not 0 <= k < self.frame_count:
            raise InvalidArgument(f"frame index {k} out of range [0, {self.frame_count})")
        if k not in self._frames:
            self._frames[k] = FrameMesh(
                self.vertices[k], self.faces, self.corner_uvs,
                max(self.scene_extent, 1e-12),
            )
        return self._frames[k]

    def centered(self) -> "MeshSequence":
        """Translate all frames so the union AABB midpoint sits at the origin."""
        lo, hi = self.bounds
        mid = (lo + hi) / 2.0
        return MeshSequence(self.vertices - mid, self.faces, self.corner_uvs)


def vertex_normals(vertices: np.ndarray, faces: np.ndarray) -> np.ndarray:
    """Area-weighted vertex normals; degenerate vertices fall back to +Z."""
    normals = np.zeros_like(vertices)
    if faces.size:
        p0, p1, p2 = (vertices[faces[:, i]] for i in range(3))
        fn = np.cross(p1 - p0, p2 - p0)  # length is twice the face area
        for i in range(3):
            np.add.at(normals, faces[:, i], fn)
    length = np.linalg.norm(normals, axis=1, keepdims=True)
    bad = length[:, 0] < 1e-20
    normals[bad] = (0.0, 0.0, 1.0)
    length[bad] = 1.0
    return normals / length


@dataclass(frozen=True)
class Camera:
    """Perspective pinhole camera looking from position toward look_at."""

    position: tuple[float, float, float]
    look_at: tuple[float, float, float] = (0.0, 0.0, 0.0)
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)
    vertical_fov: float = math.radians(45.0)
    resolution: tuple[int, int] = (96, 96)  # (width, height)

    def __post_init__(self):
        if not 0.0 < self.vertical_fov < math.pi:
            raise InvalidArgument(f"vertical_fov must be in (0, pi), got {self.vertical_fov}")
        w, h = self.resolution
        if w < 1 or h < 1:
            raise InvalidArgument(f"resolution must be positive, got {self.resolution}")
        fwd = np.subtract(self.look_at, self.position, dtype=np.float64)
        norm = np.linalg.norm(fwd)
        if norm < 1e-12:
            raise InvalidArgument("camera position coincides with look_at")
        fwd = fwd / norm
        up = np.asarray(self.up, dtype=np.float64)
        if np.linalg.norm(np.cross(fwd, up)) < 1e-9:
            raise InvalidArgument("up vector is parallel to the view direction")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Orthonormal (right, up, forward) world-space axes."""
        fwd = np.subtract(self.look_at, self.position, dtype=np.float64)
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.asarray(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        true_up = np.cross(right, fwd)
        return right, true_up, fwd

    def with_resolution(self, resolution: tuple[int, int]) -> "Camera":
        return Camera(self.position, self.look_at, self.up, self.vertical_fov, resolution)


@dataclass(frozen=True)
class CameraRig:
    """Ordered list of cameras; the order fixes every multi-view reduction."""

    cameras: tuple[Camera, ...]

    def __post_init__(self):
        if len(self.cameras) < 1:
            raise InvalidArgument("a rig needs at least one camera")

    def __len__(self) -> int:
        return len(self.cameras)

    def __iter__(self):
        return iter(self.cameras)

    def __getitem__(self, v: int) -> Camera:
        return self.cameras[v]


def default_rig(radius: float, azimuth_count: int = 6, top_view: bool = True,
                top_elevation: float = math.radians(60.0),
                top_azimuth: float = math.radians(30.0),
                vertical_fov: float = math.radians(45.0),
                resolution: tuple[int, int] = (96, 96)) -> CameraRig:
    """Cameras on a circle around +Y at elevation 0, plus an optional raised view.

    The azimuthal cameras are uniformly spaced in the XZ plane starting at
    azimuth 0 (+Z axis), all looking at the origin. The extra raised camera
    sits at azimuth ``top_azimuth``; its elevation is a parameter because no
    single convention is standard.
    """
    if radius <= 0.0:
        raise InvalidArgument(f"rig radius must be positive, got {radius}")
    if azimuth_count < 1:
        raise InvalidArgument(f"azimuth_count must be >= 1, got {azimuth_count}")
    cams = []
    for i in range(azimuth_count):
        azim = 2.0 * math.pi * i / azimuth_count
        cams.append(_orbit_camera(radius, azim, 0.0, vertical_fov, resolution))
    if top_view:
        cams.append(_orbit_camera(radius, top_azimuth, top_elevation, vertical_fov, resolution))
    return CameraRig(tuple(cams))


def _orbit_camera(radius, azimuth, elevation, fov, resolution) -> Camera:
    pos = (
        radius * math.sin(azimuth) * math.cos(elevation),
        radius * math.sin(elevation),
        radius * math.cos(azimuth) * math.cos(elevation),
    )
    return Camera(position=pos, vertical_fov=fov, resolution=resolution)


def orbit_camera(radius: float, azimuth: float, elevation: float = 0.0,
                 vertical_fov: float = math.radians(45.0),
                 resolution: tuple[int, int] = (96, 96)) -> Camera:
    """Single origin-looking camera at spherical (radius, azimuth, elevation)."""
    if radius <= 0.0:
        raise InvalidArgument(f"camera radius must be positive, got {radius}")
    return _orbit_camera(radius, azimuth, elevation, vertical_fov, resolution)


# --- OBJ sequence I/O ------------------------------------------------------

_FLOAT_FMT = "%.17g"  # round-trips float64 exactly


def load_mesh_sequence(directory: str | os.PathLike,
                       pattern: str = DEFAULT_FRAME_PATTERN,
                       center: bool = True) -> MeshSequence:
    """Load one OBJ per keyframe from a directory, sorted into frame order.

    The pattern is a printf-style file name; files matching it are ordered
    by their frame number. All frames must share the face list and UV
    layout bit-exactly. By default the sequence is translated so the union
    bounding box over all frames is centered at the origin.
    """
    directory = Path(directory)
    regex = re.compile(
        "^" + re.escape(pattern).replace(re.escape("%04d"), r"(\d+)").replace(
            re.escape("%d"), r"(\d+)") + "$"
    )
    matches = []
    try:
        names = sorted(os.listdir(directory))
    except OSError as err:
        raise IOError(f"cannot list mesh directory {directory}: {err}") from err
    for name in names:
        m = regex.match(name)
        if m:
            matches.append((int(m.group(1)), directory / name))
    if not matches:
        raise IOError(f"no files matching {pattern!r} in {directory}")
    matches.sort()

    verts_per_frame = []
    faces_ref = None
    uvs_ref = None
    first_path = None
    for _, path in matches:
        verts, faces, uvs = _load_obj(path)
        if faces_ref is None:
            faces_ref, uvs_ref, first_path = faces, uvs, path
        else:
            if faces.shape != faces_ref.shape or not np.array_equal(faces, faces_ref):
                raise TopologyMismatch(
                    f"{path} face list differs from {first_path}"
                )
            if not np.array_equal(uvs, uvs_ref):
                raise TopologyMismatch(
                    f"{path} UV layout differs from {first_path}"
                )
            if verts.shape != verts_per_frame[0].shape:
                raise TopologyMismatch(
                    f"{path} vertex count differs from {first_path}"
                )
        verts_per_frame.append(verts)

    seq = MeshSequence(np.stack(verts_per_frame), faces_ref, uvs_ref)
    return seq.centered() if center else seq


def _load_obj(path: Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parse v/vt/f records; polygons are fan-triangulated; vn is ignored."""
    positions: list[list[float]] = []
    texcoords: list[list[float]] = []
    face_corners: list[list[tuple[int, int]]] = []
    try:
        text = path.read_text()
    except OSError as err:
        raise IOError(f"cannot read mesh file {path}: {err}") from err
    for ln, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens or tokens[0].startswith("#"):
            continue
        tag = tokens[0]
        if tag == "v":
            positions.append([float(x) for x in tokens[1:4]])
        elif tag == "vt":
            texcoords.append([float(x) for x in tokens[1:3]])
        elif tag == "f":
            corners = []
            for tok in tokens[1:]:
                parts = tok.split("/")
                vi = int(parts[0])
                if len(parts) < 2 or parts[1] == "":
                    raise UvMissing(f"{path}:{ln}: face corner {tok!r} has no vt index")
                ti = int(parts[1])
                # OBJ indices are 1-based; negative indices count from the end
                vi = vi - 1 if vi > 0 else len(positions) + vi
                ti = ti - 1 if ti > 0 else len(texcoords) + ti
                corners.append((vi, ti))
            if len(corners) < 3:
                raise IOError(f"{path}:{ln}: face with fewer than 3 corners")
            for a in range(1, len(corners) - 1):
                face_corners.append([corners[0], corners[a], corners[a + 1]])
    if not positions:
        raise IOError(f"{path}: no vertices found")
    if not texcoords:
        raise UvMissing(f"{path}: mesh has no vt records")
    verts = np.asarray(positions, dtype=np.float64)
    uvs_all = np.asarray(texcoords, dtype=np.float64)
    faces = np.asarray([[c[0] for c in f] for f in face_corners], dtype=np.int32)
    uv_idx = np.asarray([[c[1] for c in f] for f in face_corners], dtype=np.int64)
    if faces.size == 0:
        faces = faces.reshape(0, 3)
        corner_uvs = np.zeros((0, 3, 2), dtype=np.float64)
    else:
        if uv_idx.min() < 0 or uv_idx.max() >= len(uvs_all):
            raise IOError(f"{path}: vt index out of range")
        corner_uvs = uvs_all[uv_idx]
    return verts, faces, corner_uvs


def save_mesh_sequence(seq: MeshSequence, directory: str | os.PathLike,
                       pattern: str = DEFAULT_FRAME_PATTERN) -> list[Path]:
    """Write the sequence as one OBJ per frame; inverse of load (bit-exact)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(seq.frame_count):
        path = directory / (pattern % k)
        lines = []
        for v in seq.vertices[k]:
            lines.append("v " + " ".join(_FLOAT_FMT % x for x in v))
        for fi in range(seq.face_count):
            for c in range(3):
                lines.append("vt " + " ".join(_FLOAT_FMT % x for x in seq.corner_uvs[fi, c]))
        for fi in range(seq.face_count):
            base = fi * 3 + 1
            idx = seq.faces[fi] + 1
            lines.append(f"f {idx[0]}/{base} {idx[1]}/{base + 1} {idx[2]}/{base + 2}")
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths
