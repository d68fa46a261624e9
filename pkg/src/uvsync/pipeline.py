"""End-to-end texture synthesis for a mesh sequence.

One run owns all mutable state: per-frame UV latent textures, per-view
view latents, and per-view background latents. Each denoising step
fans out over views (denoise, render, un-project), then performs the
deterministic UV-space reductions: aggregate clean estimates, build the
sequential-fill reference, step every frame in UV space, blend with the
reference, and re-render composited view latents for the next step.

The aggregation mode switches what gets baked each step: the proposed
mode bakes only the clean estimate and steps in UV space; the two
baseline modes (kept for comparison runs) bake either the stepped
latents or the clean estimate plus noise, and initialize their view
latents i.i.d. per view instead of rendering shared UV noise.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import gridio
from .denoiser import Denoiser, DenoiseRequest, validate_response
from .errors import BackendUnavailable, InvalidArgument, ShapeMismatch, UvSyncError
from .geometry import Camera, CameraRig, MeshSequence
from .raster import (
    RenderBuffers, TexelBake, TexelView, apply_texel_view, bake_texels,
    project_texels, render_buffers, render_texture, unproject,
)
from .schedule import (
    NoiseSchedule, Prediction, implied_eps, make_schedule, prediction_to_x0,
)
from .uvdiff import (
    AggregationConfig, LatentTexture, aggregate_views, baseline_aggregate_mode,
    blend_with_reference, build_reference, composite, dilate_texture, uv_ddim_step,
)


@dataclass
class PipelineConfig:
    """Knobs for one synthesis run; defaults follow the reference setup."""

    steps: int = 50
    latent_resolution: int = 96
    uv_resolution: int = 512
    channels: int = 3
    blend_lambda: float = 0.2
    cosine_exponent: float = 3.0
    cos_min: float = 0.1
    keyframe_interval: int = 3
    mode: str = "proposed"
    seed: int = 0
    prompt: str = ""
    schedule_kind: str = "linear-beta"
    depth_tolerance: float = 1e-3
    supersample: int = 2
    background: bool = True
    workers: int = 1
    fill_threshold: float = 1e-6
    gutter_radius: int = 2
    guidance_params: dict = field(default_factory=dict)
    checkpoint_dir: str | None = None

    def validate(self) -> "PipelineConfig":
        if self.steps < 1 or self.latent_resolution < 1 or self.uv_resolution < 1:
            raise InvalidArgument("steps and resolutions must be >= 1")
        if self.channels < 1 or self.keyframe_interval < 1 or self.workers < 1:
            raise InvalidArgument("channels, keyframe_interval, workers must be >= 1")
        if not 0.0 <= self.blend_lambda <= 1.0:
            raise InvalidArgument(f"blend_lambda must be in [0, 1], got {self.blend_lambda}")
        baseline_aggregate_mode(self.mode)
        return self


@dataclass
class TextureSequence:
    """Finalized per-keyframe textures plus optional interpolated frames."""

    textures: np.ndarray            # (K, C, R, R) float32
    coverage: np.ndarray            # (K, R, R) float32 aggregation weight
    filled: np.ndarray              # (K, R, R) bool, True where a value exists
    interpolated: np.ndarray | None = None  # (K', C, R, R)
    interval: int = 1

    @property
    def frame_count(self) -> int:
        return self.textures.shape[0]

    def output_frames(self) -> np.ndarray:
        return self.interpolated if self.interpolated is not None else self.textures


@dataclass
class StepSnapshot:
    """Per-step state handed to the progress callback."""

    t: int
    textures: list[LatentTexture]       # T_{t-1} per frame, post blend
    t0_hats: list[LatentTexture]        # aggregated clean estimates
    view_latents: np.ndarray            # (V, K, C, H, W) float32, next-step input
    bg_latents: np.ndarray | None
    eps_textures: list[LatentTexture] | None = None  # agg-x0-eps mode only


class _SceneTables:
    """Precomputed per-(view, frame) rasterization tables; immutable."""

    def __init__(self, meshes: MeshSequence, rig: CameraRig, cfg: PipelineConfig):
        lat = cfg.latent_resolution
        self.cams = [cam.with_resolution((lat, lat)) for cam in rig]
        v_count, k_count = len(self.cams), meshes.frame_count

        def make_buffers(vk):
            v, k = vk
            return render_buffers(meshes.frame(k), self.cams[v], supersample=cfg.supersample)

        pairs = [(v, k) for v in range(v_count) for k in range(k_count)]
        buf_list = _map_ordered(make_buffers, pairs, cfg.workers)
        self.buffers: list[list[RenderBuffers]] = [
            [buf_list[v * k_count + k] for k in range(k_count)] for v in range(v_count)
        ]
        self.bakes: list[TexelBake] = _map_ordered(
            lambda k: bake_texels(meshes.frame(k), cfg.uv_resolution),
            list(range(k_count)), cfg.workers,
        )

        def make_tview(vk):
            v, k = vk
            return project_texels(
                self.bakes[k], self.cams[v], self.buffers[v][k],
                depth_tolerance=cfg.depth_tolerance, cos_min=cfg.cos_min,
            )

        tv_list = _map_ordered(make_tview, pairs, cfg.workers)
        self.tviews: list[list[TexelView]] = [
            [tv_list[v * k_count + k] for k in range(k_count)] for v in range(v_count)
        ]
        self.depth_cond = np.stack(
            [
                np.stack(
                    [
                        np.where(np.isfinite(self.buffers[v][k].depth),
                                 self.buffers[v][k].depth, 0.0)
                        for k in range(k_count)
                    ]
                )
                for v in range(v_count)
            ]
        ).astype(np.float32)
        self.fg_masks = [
            [self.buffers[v][k].fg_mask for k in range(k_count)] for v in range(v_count)
        ]
        self.atlas_masks = [bake.mask for bake in self.bakes]


def _map_ordered(fn: Callable, items: Sequence, workers: int) -> list:
    """Apply fn to items, optionally threaded; results keep item order."""
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def generate(meshes: MeshSequence, rig: CameraRig, config: PipelineConfig,
             denoiser: Denoiser,
             step_callback: Callable[[StepSnapshot], None] | None = None,
             decoder: Callable[[np.ndarray], np.ndarray] | None = None,
             ) -> TextureSequence:
    """Run the full synchronized denoising loop and finalize textures."""
    cfg = config.validate()
    mode = baseline_aggregate_mode(cfg.mode)
    sched = make_schedule(cfg.steps, kind=cfg.schedule_kind)
    tables = _SceneTables(meshes, rig, cfg)
    agg_cfg = AggregationConfig(cosine_exponent=cfg.cosine_exponent, cos_min=0.0)

    v_count, k_count = len(tables.cams), meshes.frame_count
    c, r, lat = cfg.channels, cfg.uv_resolution, cfg.latent_resolution
    rng = np.random.default_rng(cfg.seed)

    textures: list[LatentTexture] = []
    # texels whose values currently mean something; initial noise counts
    content = [np.ones((r, r), dtype=bool) for _ in range(k_count)]
    if mode == "proposed":
        noise = rng.standard_normal((k_count, c, r, r), dtype=np.float32)
        textures = [
            LatentTexture(values=noise[k], coverage=tables.atlas_masks[k].astype(np.float64),
                          frame_index=k)
            for k in range(k_count)
        ]
        z_views = _render_views(textures, content, tables, cfg)
    else:
        z_views = rng.standard_normal((v_count, k_count, c, lat, lat), dtype=np.float32)

    bg_views = None
    if cfg.background:
        bg_views = rng.standard_normal((v_count, k_count, c, lat, lat), dtype=np.float32)
        z_views = _composite_views(z_views, bg_views, tables)

    zero_depth = np.zeros((k_count, lat, lat), dtype=np.float32)

    for t in range(cfg.steps, 0, -1):
        try:
            if bg_views is not None:
                bg_views = _denoise_background(bg_views, denoiser, zero_depth, t,
                                               sched, cfg)
            x0_views = _denoise_views(z_views, denoiser, tables, t, sched, cfg)

            eps_texs = None
            if mode == "proposed":
                t0_hats = _bake_frames(x0_views, tables, agg_cfg, cfg)
                ref = build_reference(t0_hats, cfg.fill_threshold)
                stepped = []
                for k in range(k_count):
                    nxt = uv_ddim_step(textures[k], t0_hats[k], t, sched,
                                       cfg.fill_threshold)
                    nxt = blend_with_reference(
                        nxt, ref, t0_hats[k].visibility_mask(cfg.fill_threshold),
                        cfg.blend_lambda,
                    )
                    stepped.append(_as_state(nxt))
                textures = stepped
            elif mode == "agg-zprev":
                z_prev = np.empty_like(z_views)
                for v in range(v_count):
                    x0 = x0_views[v]
                    eps = implied_eps(z_views[v], x0, t, sched)
                    ab_prev = sched.at(t - 1)
                    z_prev[v] = (np.sqrt(ab_prev) * x0
                                 + np.sqrt(1.0 - ab_prev) * eps).astype(np.float32)
                t0_hats = _bake_frames(z_prev.astype(np.float64), tables, agg_cfg, cfg)
                ref = build_reference(t0_hats, cfg.fill_threshold)
                textures = [
                    _as_state(blend_with_reference(
                        t0_hats[k], ref, t0_hats[k].visibility_mask(cfg.fill_threshold),
                        cfg.blend_lambda))
                    for k in range(k_count)
                ]
            else:  # agg-x0-eps
                eps_views = np.stack([
                    implied_eps(z_views[v], x0_views[v], t, sched)
                    for v in range(v_count)
                ])
                t0_hats = _bake_frames(x0_views, tables, agg_cfg, cfg)
                eps_texs = _bake_frames(eps_views, tables, agg_cfg, cfg)
                ref = build_reference(t0_hats, cfg.fill_threshold)
                ab_prev = sched.at(t - 1)
                stepped = []
                for k in range(k_count):
                    vals = (np.sqrt(ab_prev) * t0_hats[k].values
                            + np.sqrt(1.0 - ab_prev) * eps_texs[k].values)
                    tex = LatentTexture(values=vals, coverage=t0_hats[k].coverage.copy(),
                                        frame_index=k)
                    tex = blend_with_reference(
                        tex, ref, t0_hats[k].visibility_mask(cfg.fill_threshold),
                        cfg.blend_lambda,
                    )
                    stepped.append(_as_state(tex))
                textures = stepped

            content = [
                ref.mask | t0_hats[k].covered(cfg.fill_threshold)
                for k in range(k_count)
            ]
            z_views = _render_views(textures, content, tables, cfg)
            if bg_views is not None:
                z_views = _composite_views(z_views, bg_views, tables)
        except UvSyncError as err:
            raise type(err)(f"[step t={t}] {err}") from err

        if cfg.checkpoint_dir is not None:
            _write_checkpoint(cfg.checkpoint_dir, t - 1, textures, z_views, bg_views)
        if step_callback is not None:
            step_callback(StepSnapshot(
                t=t, textures=textures, t0_hats=t0_hats, view_latents=z_views,
                bg_latents=bg_views, eps_textures=eps_texs,
            ))

    return finalize_textures(z_views, meshes, rig, cfg, decoder=decoder,
                             tables=tables)


def _as_state(tex: LatentTexture) -> LatentTexture:
    """Latents are carried in single precision between steps."""
    return LatentTexture(values=tex.values.astype(np.float32),
                         coverage=tex.coverage, frame_index=tex.frame_index)


def _render_views(textures: Sequence[LatentTexture],
                  content: Sequence[np.ndarray], tables: _SceneTables,
                  cfg: PipelineConfig) -> np.ndarray:
    """Render every frame texture into every view.

    Textures are fully padded from their content texels first, so pixels
    whose footprint touches texels no view has written (atlas gutters,
    grazing-angle rings) sample propagated boundary values instead of
    stale zeros.
    """
    k_count = len(textures)
    padded = [
        dilate_texture(textures[k].values, content[k], None)[0]
        for k in range(k_count)
    ]
    pairs = [(v, k) for v in range(len(tables.cams)) for k in range(k_count)]

    def render_one(vk):
        v, k = vk
        return render_texture(padded[k], tables.buffers[v][k]).astype(np.float32)

    rendered = _map_ordered(render_one, pairs, cfg.workers)
    lat = cfg.latent_resolution
    out = np.zeros((len(tables.cams), k_count, cfg.channels, lat, lat), dtype=np.float32)
    for (v, k), img in zip(pairs, rendered):
        out[v, k] = img
    return out


def _composite_views(z_views: np.ndarray, bg_views: np.ndarray,
                     tables: _SceneTables) -> np.ndarray:
    out = np.empty_like(z_views)
    for v in range(z_views.shape[0]):
        for k in range(z_views.shape[1]):
            out[v, k] = composite(
                z_views[v, k], bg_views[v, k], tables.fg_masks[v][k]
            ).astype(np.float32)
    return out


def _denoise_views(z_views: np.ndarray, denoiser: Denoiser, tables: _SceneTables,
                   t: int, sched: NoiseSchedule, cfg: PipelineConfig) -> np.ndarray:
    """Per-view denoise, normalized to clean-sample estimates (float64)."""

    def one(v):
        req = DenoiseRequest(
            view_id=v, timestep=t, latents=z_views[v],
            depth_conditions=tables.depth_cond[v], prompt=cfg.prompt,
            params=dict(cfg.guidance_params),
        )
        resp = validate_response(req, denoiser.denoise(req))
        pred = Prediction(kind=resp.kind, tensor=resp.frames)
        return prediction_to_x0(pred, z_views[v], t, sched)

    workers = cfg.workers if getattr(denoiser, "concurrent_safe", False) else 1
    return np.stack(_map_ordered(one, list(range(z_views.shape[0])), workers))


def _denoise_background(bg_views: np.ndarray, denoiser: Denoiser,
                        zero_depth: np.ndarray, t: int, sched: NoiseSchedule,
                        cfg: PipelineConfig) -> np.ndarray:
    """Step the per-view background latents with an all-far depth condition."""

    def one(v):
        params = dict(cfg.guidance_params)
        params["background"] = True
        req = DenoiseRequest(
            view_id=v, timestep=t, latents=bg_views[v],
            depth_conditions=zero_depth, prompt=cfg.prompt, params=params,
        )
        resp = validate_response(req, denoiser.denoise(req))
        pred = Prediction(kind=resp.kind, tensor=resp.frames)
        x0 = prediction_to_x0(pred, bg_views[v], t, sched)
        eps = implied_eps(bg_views[v], x0, t, sched)
        ab_prev = sched.at(t - 1)
        return (np.sqrt(ab_prev) * x0 + np.sqrt(1.0 - ab_prev) * eps).astype(np.float32)

    workers = cfg.workers if getattr(denoiser, "concurrent_safe", False) else 1
    return np.stack(_map_ordered(one, list(range(bg_views.shape[0])), workers))


def _bake_frames(x0_views: np.ndarray, tables: _SceneTables,
                 agg_cfg: AggregationConfig, cfg: PipelineConfig) -> list[LatentTexture]:
    """Un-project every view's estimate and aggregate per frame."""
    v_count = x0_views.shape[0]
    k_count = x0_views.shape[1]
    pairs = [(v, k) for v in range(v_count) for k in range(k_count)]
    parts = _map_ordered(
        lambda vk: apply_texel_view(x0_views[vk[0], vk[1]], tables.tviews[vk[0]][vk[1]]),
        pairs, cfg.workers,
    )
    out = []
    for k in range(k_count):
        partials = [parts[v * k_count + k] for v in range(v_count)]
        out.append(aggregate_views(partials, agg_cfg, frame_index=k))
    return out


def finalize_textures(view_latents: np.ndarray, meshes: MeshSequence,
                      rig: CameraRig, config: PipelineConfig,
                      decoder: Callable[[np.ndarray], np.ndarray] | None = None,
                      tables: _SceneTables | None = None) -> TextureSequence:
    """Decode final view latents, bake them at full UV resolution, and fill.

    Texels invisible in a frame but seen in some other frame take the
    sequential-fill reference value, mirroring the in-loop replacement;
    texels never seen anywhere are filled by gutter dilation. Coverage
    reports the raw aggregation weight so callers can tell baked texels
    from filled ones.
    """
    cfg = config.validate()
    if tables is None:
        tables = _SceneTables(meshes, rig, cfg)
    v_count, k_count = view_latents.shape[0], view_latents.shape[1]

    decoded = []
    for v in range(v_count):
        frames = np.asarray(view_latents[v], dtype=np.float64)
        if decoder is not None:
            try:
                frames = np.asarray(decoder(frames), dtype=np.float64)
            except Exception as err:
                raise BackendUnavailable(f"decoder hook failed: {err}") from err
            if frames.ndim != 4 or frames.shape[0] != k_count:
                raise ShapeMismatch(
                    f"decoder returned {frames.shape}, expected (K, C', H', W')"
                )
        decoded.append(frames)

    dec_h, dec_w = decoded[0].shape[2], decoded[0].shape[3]
    lat = cfg.latent_resolution
    if (dec_h, dec_w) == (lat, lat):
        tviews = tables.tviews
    else:
        cams = [cam.with_resolution((dec_w, dec_h)) for cam in rig]
        tviews = []
        for v in range(v_count):
            row = []
            for k in range(k_count):
                buf = render_buffers(meshes.frame(k), cams[v], supersample=cfg.supersample)
                row.append(project_texels(tables.bakes[k], cams[v], buf,
                                          depth_tolerance=cfg.depth_tolerance,
                                          cos_min=cfg.cos_min))
            tviews.append(row)

    agg_cfg = AggregationConfig(cosine_exponent=cfg.cosine_exponent, cos_min=0.0)
    baked = []
    for k in range(k_count):
        partials = [apply_texel_view(decoded[v][k], tviews[v][k]) for v in range(v_count)]
        baked.append(aggregate_views(partials, agg_cfg, frame_index=k))

    ref = build_reference(baked, cfg.fill_threshold)
    r = cfg.uv_resolution
    c = baked[0].values.shape[0]
    textures = np.zeros((k_count, c, r, r), dtype=np.float32)
    coverage = np.zeros((k_count, r, r), dtype=np.float32)
    filled = np.zeros((k_count, r, r), dtype=bool)
    for k in range(k_count):
        vals = baked[k].values.copy()
        mask = baked[k].covered(cfg.fill_threshold)
        take = ref.mask & ~mask
        vals[:, take] = ref.values[:, take]
        mask = mask | ref.mask
        vals, mask = dilate_texture(vals, mask, cfg.gutter_radius)
        textures[k] = vals.astype(np.float32)
        coverage[k] = baked[k].coverage.astype(np.float32)
        filled[k] = mask
    return TextureSequence(textures=textures, coverage=coverage, filled=filled)


def interpolate_keyframes(tex_seq: TextureSequence, interval: int) -> TextureSequence:
    """Insert (interval - 1) linear in-betweens between consecutive keyframes."""
    if interval < 1:
        raise InvalidArgument(f"interval must be >= 1, got {interval}")
    if interval == 1:
        return TextureSequence(tex_seq.textures, tex_seq.coverage, tex_seq.filled,
                               interpolated=tex_seq.textures.copy(), interval=1)
    k_count = tex_seq.frame_count
    if k_count < 2:
        raise InvalidArgument("interpolation needs at least two keyframes")
    frames = []
    for k in range(k_count - 1):
        a = tex_seq.textures[k].astype(np.float64)
        b = tex_seq.textures[k + 1].astype(np.float64)
        frames.append(tex_seq.textures[k].copy())
        for s in range(1, interval):
            w = s / interval
            frames.append(((1.0 - w) * a + w * b).astype(np.float32))
    frames.append(tex_seq.textures[-1].copy())
    return TextureSequence(tex_seq.textures, tex_seq.coverage, tex_seq.filled,
                           interpolated=np.stack(frames), interval=interval)


def render_sequence(meshes: MeshSequence, tex_seq: TextureSequence,
                    camera: Camera | CameraRig, out_dir,
                    supersample: int = 2) -> dict:
    """Render every output frame to PNG files, plus a consistency report.

    In-between textures ride on the nearest keyframe mesh. When a rig is
    given, the first camera produces the image files and all cameras feed
    a per-frame cross-view consistency report (std across views of
    re-unprojected renders, on texels seen by at least two views).
    """
    cams = list(camera) if isinstance(camera, CameraRig) else [camera]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    frames = tex_seq.output_frames()
    interval = tex_seq.interval

    buffer_cache: dict[tuple[int, int], RenderBuffers] = {}

    def buffers_for(v: int, k: int) -> RenderBuffers:
        if (v, k) not in buffer_cache:
            buffer_cache[(v, k)] = render_buffers(meshes.frame(k), cams[v],
                                                  supersample=supersample)
        return buffer_cache[(v, k)]

    report: dict = {"frames": []}
    paths = []
    uv_res = min(tex_seq.textures.shape[-1], 256)
    bake_cache: dict[int, TexelBake] = {}
    for j in range(frames.shape[0]):
        k = min(int(round(j / interval)), meshes.frame_count - 1)
        img = render_texture(frames[j], buffers_for(0, k))
        path = out / f"frame_{j:04d}.png"
        gridio.save_image(path, img, lo=0.0, hi=1.0)
        paths.append(path)

        entry = {"frame": j, "mesh_frame": k}
        if len(cams) >= 2:
            if k not in bake_cache:
                bake_cache[k] = bake_texels(meshes.frame(k), uv_res)
            recovered = []
            for v in range(len(cams)):
                view = render_texture(frames[j], buffers_for(v, k))
                recovered.append(unproject(
                    view, meshes.frame(k), cams[v], uv_res,
                    buffers=buffers_for(v, k), bake=bake_cache[k],
                ))
            vals = np.stack([p.values for p in recovered])       # (V, C, R, R)
            w = np.stack([p.weight for p in recovered]) > 0.0    # (V, R, R)
            multi = w.sum(axis=0) >= 2
            if multi.any():
                masked = np.where(w[:, None], vals, np.nan)
                with np.errstate(invalid="ignore"):
                    std = np.nanstd(masked[:, :, multi], axis=0)
                entry["mean_std"] = float(np.nanmean(std))
                entry["max_std"] = float(np.nanmax(std))
                entry["texels"] = int(multi.sum())
        report["frames"].append(entry)

    (out / "consistency_report.json").write_text(json.dumps(report, indent=2))
    report["paths"] = paths
    return report


# --- serialization helpers ---------------------------------------------------

def export_textures(tex_seq: TextureSequence, out_dir) -> list[Path]:
    """Write per-frame texture grids, PNG previews, and coverage maps."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for k in range(tex_seq.frame_count):
        grid_path = out / f"texture_{k:04d}.f32"
        gridio.save_grid(grid_path, tex_seq.textures[k])
        gridio.save_image(out / f"texture_{k:04d}.png", tex_seq.textures[k],
                          lo=0.0, hi=1.0)
        gridio.save_grid(out / f"coverage_{k:04d}.f32", tex_seq.coverage[k])
        gridio.save_image(out / f"coverage_{k:04d}.png", tex_seq.coverage[k])
        paths.append(grid_path)
    if tex_seq.interpolated is not None:
        for j in range(tex_seq.interpolated.shape[0]):
            gridio.save_grid(out / f"interp_{j:04d}.f32", tex_seq.interpolated[j])
    return paths


def _write_checkpoint(checkpoint_dir, t: int, textures: list[LatentTexture],
                      z_views: np.ndarray, bg_views: np.ndarray | None) -> None:
    out = Path(checkpoint_dir)
    out.mkdir(parents=True, exist_ok=True)
    for k, tex in enumerate(textures):
        gridio.save_grid(out / f"state_t{t:04d}_tex{k:04d}.f32", tex.values)
    gridio.save_grid(out / f"state_t{t:04d}_views.f32", z_views)
    if bg_views is not None:
        gridio.save_grid(out / f"state_t{t:04d}_bg.f32", bg_views)
    (out / "latest.json").write_text(json.dumps({"t": t}))
