"""Software rasterizer: the forward render operator and its inverse.

Forward (render_texture) maps a UV texture to a camera image; inverse
(unproject) maps a camera image back to a partial UV texture with
per-texel visibility weights. Both lean on two precomputable tables:

- RenderBuffers: a z-buffered rasterization of one mesh frame from one
  camera, kept at ``supersample`` times the target resolution for the
  visibility tests and box-filtered down for the summary maps.
- TexelBake / TexelView: a texture-space rasterization of the mesh
  (each triangle drawn into its UV footprint) giving every texel a 3D
  position and normal, then projected into a camera and depth-tested
  against the render buffers, shadow-map style.

Conventions: image row 0 is the top of the frame and pixel (i, j) has
its center at continuous coordinates (x=j, y=i). UV origin is the
bottom-left of the texture; texel (i, j) of an R x R texture has its
center at u=(j+0.5)/R, v=1-(i+0.5)/R. Depth is distance along the view
axis with +inf for background. All rasterization is sequential in face
order, so identical inputs give bit-identical buffers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import gridio
from .errors import InvalidArgument, ShapeMismatch
from .geometry import Camera, FrameMesh

_AREA_EPS = 1e-12


@dataclass(frozen=True)
class RenderBuffers:
    """Per (view, frame) geometry buffers at the camera's resolution."""

    depth: np.ndarray      # (H, W) view-axis distance, +inf background
    cosine: np.ndarray     # (H, W) clamped normal-to-camera cosine, 0 background
    fg_mask: np.ndarray    # (H, W) fractional coverage in [0, 1]
    texel_map: np.ndarray  # (H, W, 2) interpolated UV of covered pixels, 0 background
    supersample: int
    depth_ss: np.ndarray   # (H*ss, W*ss) visibility-pass depth
    uv_ss: np.ndarray      # (H*ss, W*ss, 2)
    covered_ss: np.ndarray  # (H*ss, W*ss) bool

    @property
    def resolution(self) -> tuple[int, int]:
        h, w = self.depth.shape
        return (w, h)

    def hard_mask(self) -> np.ndarray:
        """fg_mask binarized at 0.5, for contexts that need a {0,1} mask."""
        return (self.fg_mask >= 0.5).astype(np.float64)


@dataclass(frozen=True)
class PartialTexture:
    """One view's contribution to a UV texture: values plus raw-cosine weights."""

    values: np.ndarray  # (C, R, R)
    weight: np.ndarray  # (R, R), zero where the view says nothing

    def __post_init__(self):
        if self.values.ndim != 3 or self.weight.shape != self.values.shape[1:]:
            raise ShapeMismatch(
                f"partial texture shapes disagree: {self.values.shape} vs {self.weight.shape}"
            )
        if np.any(self.weight < 0.0):
            raise InvalidArgument("partial texture weights must be non-negative")
        if np.any(self.values[:, self.weight == 0.0] != 0.0):
            raise InvalidArgument("texels without weight must carry value 0")


@dataclass(frozen=True)
class TexelBake:
    """Texture-space rasterization of one mesh frame."""

    mask: np.ndarray      # (R, R) bool, texel center lies inside some triangle
    position: np.ndarray  # (R, R, 3) interpolated 3D surface point
    normal: np.ndarray    # (R, R, 3) interpolated unit normal
    scene_extent: float


@dataclass(frozen=True)
class TexelView:
    """A TexelBake projected into one camera: weights and sample positions.

    valid_px marks grid pixels whose full subsample footprint is on the
    surface; bilinear gathers renormalize over those, so silhouette
    pixels (which mix background after compositing) never leak into the
    bake. Texels whose bilinear support is mostly invalid carry weight 0.
    """

    weight: np.ndarray    # (R, R) raw clamped cosine, 0 if occluded/out/backfacing
    sample_x: np.ndarray  # (R, R) continuous pixel x to sample the view grid at
    sample_y: np.ndarray  # (R, R)
    valid_px: np.ndarray  # (H, W) bool, pixels safe to sample


def project_points(camera: Camera, points: np.ndarray,
                   width: int, height: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """World points to continuous pixel coordinates plus view-axis depth."""
    right, up, fwd = camera.basis()
    rel = np.asarray(points, dtype=np.float64) - np.asarray(camera.position, dtype=np.float64)
    xv = rel @ right
    yv = rel @ up
    zv = rel @ fwd
    tan_y = math.tan(camera.vertical_fov / 2.0)
    tan_x = tan_y * (width / height)
    with np.errstate(divide="ignore", invalid="ignore"):
        px = (xv / (zv * tan_x) + 1.0) * (width / 2.0) - 0.5
        py = (1.0 - yv / (zv * tan_y)) * (height / 2.0) - 0.5
    return px, py, zv


def _view_coords(camera: Camera, points: np.ndarray):
    right, up, fwd = camera.basis()
    rel = points - np.asarray(camera.position, dtype=np.float64)
    return rel @ np.stack([right, up, fwd], axis=1)


def _clip_near(corners_view: np.ndarray, attrs: list[np.ndarray], near: float):
    """Sutherland-Hodgman clip of one triangle against z_view >= near.

    Returns a list of (corners_view, attrs) triangles (0, 1, or 2 of them).
    """
    keep = corners_view[:, 2] >= near
    if keep.all():
        return [(corners_view, attrs)]
    if not keep.any():
        return []
    poly_v = []
    poly_a = [[] for _ in attrs]
    for i in range(3):
        j = (i + 1) % 3
        vi, vj = corners_view[i], corners_view[j]
        if keep[i]:
            poly_v.append(vi)
            for a, acc in zip(attrs, poly_a):
                acc.append(a[i])
        if keep[i] != keep[j]:
            t = (near - vi[2]) / (vj[2] - vi[2])
            poly_v.append(vi + t * (vj - vi))
            for a, acc in zip(attrs, poly_a):
                acc.append(a[i] + t * (a[j] - a[i]))
    tris = []
    for s in range(1, len(poly_v) - 1):
        cv = np.stack([poly_v[0], poly_v[s], poly_v[s + 1]])
        ca = [np.stack([acc[0], acc[s], acc[s + 1]]) for acc in poly_a]
        tris.append((cv, ca))
    return tris


def _rasterize(frame: FrameMesh, camera: Camera, width: int, height: int):
    """Z-buffered perspective-correct rasterization of every triangle.

    Returns (depth, uv, position, normal) maps at (height, width); the
    last three are zero and depth is +inf where nothing is covered.
    """
    depth = np.full((height, width), np.inf, dtype=np.float64)
    uv_map = np.zeros((height, width, 2), dtype=np.float64)
    pos_map = np.zeros((height, width, 3), dtype=np.float64)
    nrm_map = np.zeros((height, width, 3), dtype=np.float64)
    if frame.faces.shape[0] == 0:
        return depth, uv_map, pos_map, nrm_map

    near = 1e-4 * max(frame.scene_extent, 1e-9)
    tan_y = math.tan(camera.vertical_fov / 2.0)
    tan_x = tan_y * (width / height)

    corner_pos = frame.corner_positions()     # (F, 3, 3)
    corner_nrm = frame.corner_normals()       # (F, 3, 3)
    corner_uv = frame.corner_uvs              # (F, 3, 2)
    view_all = _view_coords(camera, corner_pos.reshape(-1, 3)).reshape(-1, 3, 3)

    for fi in range(corner_pos.shape[0]):
        pieces = _clip_near(
            view_all[fi], [corner_pos[fi], corner_nrm[fi], corner_uv[fi]], near
        )
        for cv, (cpos, cnrm, cuv) in pieces:
            zv = cv[:, 2]
            px = (cv[:, 0] / (zv * tan_x) + 1.0) * (width / 2.0) - 0.5
            py = (1.0 - cv[:, 1] / (zv * tan_y)) * (height / 2.0) - 0.5
            _fill_triangle(
                depth, uv_map, pos_map, nrm_map,
                px, py, zv, cpos, cnrm, cuv,
            )
    return depth, uv_map, pos_map, nrm_map


def _fill_triangle(depth, uv_map, pos_map, nrm_map, px, py, zv, cpos, cnrm, cuv):
    height, width = depth.shape
    area2 = (px[1] - px[0]) * (py[2] - py[0]) - (px[2] - px[0]) * (py[1] - py[0])
    if abs(area2) < _AREA_EPS:
        return
    x_lo = max(int(math.ceil(px.min())), 0)
    x_hi = min(int(math.floor(px.max())), width - 1)
    y_lo = max(int(math.ceil(py.min())), 0)
    y_hi = min(int(math.floor(py.max())), height - 1)
    if x_lo > x_hi or y_lo > y_hi:
        return
    xs = np.arange(x_lo, x_hi + 1, dtype=np.float64)
    ys = np.arange(y_lo, y_hi + 1, dtype=np.float64)
    gx, gy = np.meshgrid(xs, ys)
    w0 = (px[2] - px[1]) * (gy - py[1]) - (py[2] - py[1]) * (gx - px[1])
    w1 = (px[0] - px[2]) * (gy - py[2]) - (py[0] - py[2]) * (gx - px[2])
    w2 = (px[1] - px[0]) * (gy - py[0]) - (py[1] - py[0]) * (gx - px[0])
    if area2 > 0.0:
        inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
    else:
        inside = (w0 <= 0.0) & (w1 <= 0.0) & (w2 <= 0.0)
    if not inside.any():
        return
    l0, l1, l2 = w0 / area2, w1 / area2, w2 / area2
    iz = l0 / zv[0] + l1 / zv[1] + l2 / zv[2]
    z_pix = 1.0 / iz
    sub = (slice(y_lo, y_hi + 1), slice(x_lo, x_hi + 1))
    update = inside & (z_pix < depth[sub])
    if not update.any():
        return

    def persp(attr):
        acc = (
            np.multiply.outer(l0 / zv[0], attr[0])
            + np.multiply.outer(l1 / zv[1], attr[1])
            + np.multiply.outer(l2 / zv[2], attr[2])
        )
        return acc / iz[..., None]

    np.copyto(depth[sub], z_pix, where=update)
    np.copyto(uv_map[sub], persp(cuv), where=update[..., None])
    np.copyto(pos_map[sub], persp(cpos), where=update[..., None])
    np.copyto(nrm_map[sub], persp(cnrm), where=update[..., None])


def render_buffers(frame: FrameMesh, camera: Camera,
                   supersample: int = 2) -> RenderBuffers:
    """Rasterize one frame from one camera into RenderBuffers.

    The raster runs at ``supersample`` times the camera resolution; the
    summary maps are box-filtered over covered subsamples, and fg_mask is
    the fractional subsample coverage. The per-pixel UV comes from the
    covered subsample nearest the pixel center, never averaged, so chart
    boundaries cannot bleed into each other.
    """
    if supersample < 1:
        raise InvalidArgument(f"supersample must be >= 1, got {supersample}")
    w, h = camera.resolution
    ss = supersample
    depth_ss, uv_ss, pos_ss, nrm_ss = _rasterize(frame, camera, w * ss, h * ss)
    covered_ss = np.isfinite(depth_ss)

    cos_ss = np.zeros_like(depth_ss)
    if covered_ss.any():
        n = nrm_ss[covered_ss]
        n = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
        to_cam = np.asarray(camera.position, dtype=np.float64) - pos_ss[covered_ss]
        to_cam = to_cam / np.maximum(np.linalg.norm(to_cam, axis=1, keepdims=True), 1e-300)
        cos_ss[covered_ss] = np.clip(np.sum(n * to_cam, axis=1), 0.0, 1.0)

    cov_blk = covered_ss.reshape(h, ss, w, ss)
    count = cov_blk.sum(axis=(1, 3))
    fg_mask = count / float(ss * ss)

    def masked_mean(field_ss):
        blk = np.where(covered_ss, field_ss, 0.0).reshape(h, ss, w, ss)
        total = blk.sum(axis=(1, 3))
        return np.divide(total, count, out=np.zeros_like(total), where=count > 0)

    depth = np.where(count.astype(bool), masked_mean(np.where(covered_ss, depth_ss, 0.0)), np.inf)
    cosine = masked_mean(cos_ss)

    # representative UV: first covered subsample in center-distance order
    offsets = (np.arange(ss) + 0.5) / ss - 0.5
    d2 = np.add.outer(offsets**2, offsets**2)
    order = np.argsort(d2, axis=None, kind="stable")
    texel_map = np.zeros((h, w, 2), dtype=np.float64)
    chosen = np.zeros((h, w), dtype=bool)
    uv_blk = uv_ss.reshape(h, ss, w, ss, 2)
    for flat in order:
        a, b = divmod(int(flat), ss)
        take = cov_blk[:, a, :, b] & ~chosen
        if take.any():
            texel_map[take] = uv_blk[:, a, :, b, :][take]
            chosen |= take

    return RenderBuffers(
        depth=depth, cosine=cosine, fg_mask=fg_mask, texel_map=texel_map,
        supersample=ss, depth_ss=depth_ss, uv_ss=uv_ss, covered_ss=covered_ss,
    )


def bilinear_sample(values: np.ndarray, tx: np.ndarray, ty: np.ndarray) -> np.ndarray:
    """Clamped bilinear lookup of a (C, H, W) grid at continuous texture coords.

    Uses the nested-lerp form, so sampling a constant grid returns that
    constant exactly.
    """
    c, gh, gw = values.shape
    tx = np.clip(tx, 0.0, gw - 1.0)
    ty = np.clip(ty, 0.0, gh - 1.0)
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    x1 = np.minimum(x0 + 1, gw - 1)
    y1 = np.minimum(y0 + 1, gh - 1)
    fx = tx - x0
    fy = ty - y0
    v00 = values[:, y0, x0]
    v01 = values[:, y0, x1]
    v10 = values[:, y1, x0]
    v11 = values[:, y1, x1]
    top = v00 + fx[None] * (v01 - v00)
    bot = v10 + fx[None] * (v11 - v10)
    return top + fy[None] * (bot - top)


def sample_uv(values: np.ndarray, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Bilinear lookup by UV (bottom-left origin) instead of texture coords."""
    _, gh, gw = values.shape
    return bilinear_sample(values, u * gw - 0.5, (1.0 - v) * gh - 0.5)


def render_texture(tex, buffers: RenderBuffers) -> np.ndarray:
    """Render a UV texture through precomputed buffers; background is zero.

    Every covered subsample of the visibility pass samples the texture
    bilinearly at its interpolated UV; subsample values are averaged per
    pixel (with supersample=1 this is exactly a texel_map lookup).
    """
    values = np.asarray(getattr(tex, "values", tex), dtype=np.float64)
    if values.ndim != 3:
        raise ShapeMismatch(f"texture must be (C, H, W), got shape {values.shape}")
    c = values.shape[0]
    hs, ws = buffers.depth_ss.shape
    ss = buffers.supersample
    h, w = hs // ss, ws // ss
    cov = buffers.covered_ss
    out_ss = np.zeros((c, hs, ws), dtype=np.float64)
    if cov.any():
        uv = buffers.uv_ss[cov]
        out_ss[:, cov] = sample_uv(values, uv[:, 0], uv[:, 1])
    # incremental mean over covered subsamples: exact for constant fields
    blk = out_ss.reshape(c, h, ss, w, ss)
    cov_blk = cov.reshape(h, ss, w, ss)
    mean = np.zeros((c, h, w), dtype=np.float64)
    count = np.zeros((h, w), dtype=np.float64)
    for a in range(ss):
        for b in range(ss):
            m = cov_blk[:, a, :, b].astype(np.float64)
            live = m > 0.0
            if not live.any():
                continue
            count += m
            frac = np.zeros((h, w), dtype=np.float64)
            frac[live] = m[live] / count[live]
            mean += frac[None] * (blk[:, :, a, :, b] - mean)
    return mean


def bake_texels(frame: FrameMesh, uv_resolution: int) -> TexelBake:
    """Rasterize the mesh into texture space: 3D position/normal per texel.

    Each triangle is drawn into its UV footprint with affine barycentric
    interpolation. Texels claimed by an earlier face keep it (relevant only
    for overlapping charts, which a valid atlas does not have).
    """
    if uv_resolution < 1:
        raise InvalidArgument(f"uv_resolution must be >= 1, got {uv_resolution}")
    r = uv_resolution
    mask = np.zeros((r, r), dtype=bool)
    position = np.zeros((r, r, 3), dtype=np.float64)
    normal = np.zeros((r, r, 3), dtype=np.float64)

    corner_pos = frame.corner_positions()
    corner_nrm = frame.corner_normals()
    tx = frame.corner_uvs[:, :, 0] * r - 0.5
    ty = (1.0 - frame.corner_uvs[:, :, 1]) * r - 0.5

    for fi in range(frame.faces.shape[0]):
        fx, fy = tx[fi], ty[fi]
        area2 = (fx[1] - fx[0]) * (fy[2] - fy[0]) - (fx[2] - fx[0]) * (fy[1] - fy[0])
        if abs(area2) < _AREA_EPS:
            continue
        x_lo = max(int(math.ceil(fx.min())), 0)
        x_hi = min(int(math.floor(fx.max())), r - 1)
        y_lo = max(int(math.ceil(fy.min())), 0)
        y_hi = min(int(math.floor(fy.max())), r - 1)
        if x_lo > x_hi or y_lo > y_hi:
            continue
        gx, gy = np.meshgrid(
            np.arange(x_lo, x_hi + 1, dtype=np.float64),
            np.arange(y_lo, y_hi + 1, dtype=np.float64),
        )
        w0 = (fx[2] - fx[1]) * (gy - fy[1]) - (fy[2] - fy[1]) * (gx - fx[1])
        w1 = (fx[0] - fx[2]) * (gy - fy[2]) - (fy[0] - fy[2]) * (gx - fx[2])
        w2 = (fx[1] - fx[0]) * (gy - fy[0]) - (fy[1] - fy[0]) * (gx - fx[0])
        if area2 > 0.0:
            inside = (w0 >= 0.0) & (w1 >= 0.0) & (w2 >= 0.0)
        else:
            inside = (w0 <= 0.0) & (w1 <= 0.0) & (w2 <= 0.0)
        sub = (slice(y_lo, y_hi + 1), slice(x_lo, x_hi + 1))
        take = inside & ~mask[sub]
        if not take.any():
            continue
        l0, l1, l2 = w0 / area2, w1 / area2, w2 / area2
        pos = (
            np.multiply.outer(l0, corner_pos[fi, 0])
            + np.multiply.outer(l1, corner_pos[fi, 1])
            + np.multiply.outer(l2, corner_pos[fi, 2])
        )
        nrm = (
            np.multiply.outer(l0, corner_nrm[fi, 0])
            + np.multiply.outer(l1, corner_nrm[fi, 1])
            + np.multiply.outer(l2, corner_nrm[fi, 2])
        )
        np.copyto(position[sub], pos, where=take[..., None])
        np.copyto(normal[sub], nrm, where=take[..., None])
        mask[sub] |= take

    if mask.any():
        n = normal[mask]
        normal[mask] = n / np.maximum(np.linalg.norm(n, axis=1, keepdims=True), 1e-300)
    return TexelBake(mask=mask, position=position, normal=normal,
                     scene_extent=frame.scene_extent)


def project_texels(bake: TexelBake, camera: Camera, buffers: RenderBuffers,
                   depth_tolerance: float = 1e-3,
                   cos_min: float = 0.1) -> TexelView:
    """Project baked texels into one camera and resolve their visibility.

    A texel keeps weight = cos(angle to camera) when it projects inside the
    frame, faces the camera with cosine >= cos_min, is no farther than the
    visibility depth plus depth_tolerance * scene_extent (one-sided: being
    nearer than the recorded surface never counts as occluded), and lands
    where at least half its bilinear support sits on fully covered pixels.
    """
    r = bake.mask.shape[0]
    weight = np.zeros((r, r), dtype=np.float64)
    sample_x = np.zeros((r, r), dtype=np.float64)
    sample_y = np.zeros((r, r), dtype=np.float64)
    valid_px = buffers.fg_mask >= 1.0 - 1e-9
    if not bake.mask.any():
        return TexelView(weight, sample_x, sample_y, valid_px)

    pts = bake.position[bake.mask]
    nrm = bake.normal[bake.mask]
    w, h = buffers.resolution
    px, py, zv = project_points(camera, pts, w, h)

    to_cam = np.asarray(camera.position, dtype=np.float64) - pts
    to_cam /= np.maximum(np.linalg.norm(to_cam, axis=1, keepdims=True), 1e-300)
    cos = np.clip(np.sum(nrm * to_cam, axis=1), 0.0, 1.0)

    ss = buffers.supersample
    hs, ws = buffers.depth_ss.shape
    in_frame = (zv > 0.0) & (px >= 0.0) & (px <= w - 1.0) & (py >= 0.0) & (py <= h - 1.0)
    ix = np.clip(np.rint((px + 0.5) * ss - 0.5), 0, ws - 1).astype(np.int64)
    iy = np.clip(np.rint((py + 0.5) * ss - 0.5), 0, hs - 1).astype(np.int64)
    tol = depth_tolerance * max(bake.scene_extent, 1e-12)
    visible = zv <= buffers.depth_ss[iy, ix] + tol

    support = _bilinear_support(valid_px, px, py)
    keep = (in_frame & visible & (cos >= max(cos_min, 0.0)) & (cos > 0.0)
            & (support > 0.5))
    w_flat = np.where(keep, cos, 0.0)
    weight[bake.mask] = w_flat
    sample_x[bake.mask] = np.where(keep, px, 0.0)
    sample_y[bake.mask] = np.where(keep, py, 0.0)
    return TexelView(weight=weight, sample_x=sample_x, sample_y=sample_y,
                     valid_px=valid_px)


def _bilinear_taps(shape: tuple[int, int], tx: np.ndarray, ty: np.ndarray):
    """Corner indices and weights of the clamped bilinear footprint."""
    gh, gw = shape
    tx = np.clip(tx, 0.0, gw - 1.0)
    ty = np.clip(ty, 0.0, gh - 1.0)
    x0 = np.floor(tx).astype(np.int64)
    y0 = np.floor(ty).astype(np.int64)
    x1 = np.minimum(x0 + 1, gw - 1)
    y1 = np.minimum(y0 + 1, gh - 1)
    fx = tx - x0
    fy = ty - y0
    weights = ((1.0 - fx) * (1.0 - fy), fx * (1.0 - fy),
               (1.0 - fx) * fy, fx * fy)
    corners = ((y0, x0), (y0, x1), (y1, x0), (y1, x1))
    return corners, weights


def _bilinear_support(valid: np.ndarray, tx: np.ndarray, ty: np.ndarray) -> np.ndarray:
    """Fraction of the bilinear mass that falls on valid pixels."""
    corners, weights = _bilinear_taps(valid.shape, tx, ty)
    support = np.zeros(np.shape(tx), dtype=np.float64)
    for (cy, cx), w in zip(corners, weights):
        support += w * valid[cy, cx]
    return support


def masked_bilinear_sample(grid: np.ndarray, valid: np.ndarray,
                           tx: np.ndarray, ty: np.ndarray) -> np.ndarray:
    """Bilinear lookup renormalized over valid pixels.

    Runs an incremental weighted mean over the (up to four) valid taps,
    so constant fields come back exactly regardless of how much of the
    footprint is valid. Footprints with no valid tap return 0.
    """
    corners, weights = _bilinear_taps(grid.shape[1:], tx, ty)
    den = np.zeros(np.shape(tx), dtype=np.float64)
    mean = np.zeros((grid.shape[0],) + np.shape(tx), dtype=np.float64)
    for (cy, cx), w in zip(corners, weights):
        m = w * valid[cy, cx]
        live = m > 0.0
        if not live.any():
            continue
        den += m
        frac = np.zeros(np.shape(tx), dtype=np.float64)
        frac[live] = m[live] / den[live]
        mean += frac[None] * (grid[:, cy, cx] - mean)
    return mean


def apply_texel_view(grid: np.ndarray, tview: TexelView) -> PartialTexture:
    """Gather a view grid into UV space through a precomputed TexelView."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 3:
        raise ShapeMismatch(f"grid must be (C, H, W), got shape {grid.shape}")
    c = grid.shape[0]
    r = tview.weight.shape[0]
    values = np.zeros((c, r, r), dtype=np.float64)
    live = tview.weight > 0.0
    if live.any():
        values[:, live] = masked_bilinear_sample(
            grid, tview.valid_px, tview.sample_x[live], tview.sample_y[live]
        )
    return PartialTexture(values=values, weight=tview.weight.copy())


def unproject(grid: np.ndarray, frame: FrameMesh, camera: Camera,
              uv_resolution: int, depth_tolerance: float = 1e-3,
              cos_min: float = 0.1, supersample: int = 2,
              buffers: RenderBuffers | None = None,
              bake: TexelBake | None = None) -> PartialTexture:
    """Un-project one view grid to a partial UV texture (convenience wrapper).

    ``buffers`` and ``bake`` can be passed in to reuse precomputed tables;
    otherwise they are built here. The grid resolution must match the
    visibility pass, i.e. the camera resolution.
    """
    grid = np.asarray(grid)
    if grid.ndim != 3:
        raise ShapeMismatch(f"grid must be (C, H, W), got shape {grid.shape}")
    if buffers is None:
        w, h = camera.resolution
        if grid.shape[1:] != (h, w):
            raise ShapeMismatch(
                f"grid {grid.shape[1:]} does not match camera resolution {(h, w)}"
            )
        buffers = render_buffers(frame, camera, supersample=supersample)
    if bake is None:
        bake = bake_texels(frame, uv_resolution)
    tview = project_texels(bake, camera, buffers, depth_tolerance=depth_tolerance,
                           cos_min=cos_min)
    return apply_texel_view(grid, tview)


def dump_buffers(buffers: RenderBuffers, out_dir, prefix: str = "view") -> None:
    """Write debug images plus raw grids for every buffer."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    finite = buffers.depth[np.isfinite(buffers.depth)]
    hi = float(finite.max()) if finite.size else 1.0
    lo = float(finite.min()) if finite.size else 0.0
    gridio.save_image(out / f"{prefix}_depth.png", buffers.depth, lo=lo, hi=hi)
    gridio.save_image(out / f"{prefix}_cosine.png", buffers.cosine, lo=0.0, hi=1.0)
    gridio.save_image(out / f"{prefix}_mask.png", buffers.fg_mask, lo=0.0, hi=1.0)
    gridio.save_grid(out / f"{prefix}_depth.f32", np.where(np.isfinite(buffers.depth), buffers.depth, 0.0))
    gridio.save_grid(out / f"{prefix}_cosine.f32", buffers.cosine)
    gridio.save_grid(out / f"{prefix}_mask.f32", buffers.fg_mask)
    gridio.save_grid(out / f"{prefix}_texel_map.f32", np.moveaxis(buffers.texel_map, -1, 0))
