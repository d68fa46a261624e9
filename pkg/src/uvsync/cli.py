"""Command line front end.

Subcommands:
  generate   synthesize a texture sequence for an OBJ keyframe directory
  render     render saved textures from a camera spec to image files
  validate   run the built-in invariant suite
  bench      per-step timing report on a synthetic scene
"""

from __future__ import annotations

import argparse
import json
import math
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import __version__, gridio, primitives
from .denoiser import CallableDenoiser, NoisyOracleDenoiser, OracleDenoiser, RemoteDenoiser
from .errors import InvalidArgument, UvSyncError
from .geometry import CameraRig, MeshSequence, default_rig, load_mesh_sequence, orbit_camera
from .pipeline import (
    PipelineConfig, TextureSequence, export_textures, generate,
    interpolate_keyframes, render_sequence,
)


def _load_config(path: str | None) -> PipelineConfig:
    cfg = PipelineConfig()
    if path is None:
        return cfg
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    known = {f.name for f in fields(PipelineConfig)}
    rig_keys = {"camera_radius", "azimuth_count", "top_view", "top_elevation_deg",
                "vertical_fov_deg"}
    for key, value in data.items():
        if key in known:
            setattr(cfg, key, value)
        elif key not in rig_keys:
            raise InvalidArgument(f"unknown config key {key!r} in {path}")
    cfg._rig_overrides = {k: data[k] for k in rig_keys if k in data}
    return cfg


def _build_rig(meshes: MeshSequence, cfg: PipelineConfig, args) -> CameraRig:
    overrides = getattr(cfg, "_rig_overrides", {})
    radius = overrides.get("camera_radius", args.camera_radius)
    if radius is None:
        radius = 1.25 * max(meshes.scene_extent, 1e-6)
    return default_rig(
        radius=radius,
        azimuth_count=int(overrides.get("azimuth_count", args.views)),
        top_view=bool(overrides.get("top_view", not args.no_top_view)),
        top_elevation=math.radians(float(overrides.get("top_elevation_deg", 60.0))),
        vertical_fov=math.radians(float(overrides.get("vertical_fov_deg", 45.0))),
        resolution=(cfg.latent_resolution, cfg.latent_resolution),
    )


def _build_denoiser(spec: str, meshes: MeshSequence, rig: CameraRig,
                    cfg: PipelineConfig, target_path: str | None):
    if spec.startswith("remote:"):
        return RemoteDenoiser.from_spec(spec[len("remote:"):])
    if target_path:
        img = gridio.load_image(target_path)
        from .raster import bilinear_sample
        r = cfg.uv_resolution
        ty, tx = np.meshgrid(
            (np.arange(r) + 0.5) / r * img.shape[1] - 0.5,
            (np.arange(r) + 0.5) / r * img.shape[2] - 0.5,
            indexing="ij",
        )
        target = bilinear_sample(img.astype(np.float64), tx, ty).reshape(
            img.shape[0], r, r
        ).astype(np.float32)[: cfg.channels]
    else:
        target = primitives.smooth_field(cfg.uv_resolution, cfg.channels, seed=cfg.seed)
    targets = [target] * meshes.frame_count
    oracle = OracleDenoiser(targets, meshes, rig, supersample=cfg.supersample)
    if spec == "oracle":
        return oracle
    if spec == "noisy-oracle":
        return NoisyOracleDenoiser(oracle, sigma=0.05, seed=cfg.seed)
    raise InvalidArgument(f"unknown denoiser spec {spec!r}")


def _cmd_generate(args) -> int:
    cfg = _load_config(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.steps is not None:
        cfg.steps = args.steps
    cfg.prompt = args.prompt
    cfg.mode = args.mode
    meshes = load_mesh_sequence(args.mesh_dir, pattern=args.pattern)
    rig = _build_rig(meshes, cfg, args)
    denoiser = _build_denoiser(args.denoiser, meshes, rig, cfg, args.oracle_texture)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    print(f"generating {meshes.frame_count} frames, {len(rig)} views, "
          f"T={cfg.steps}, mode={cfg.mode}")
    t0 = time.perf_counter()
    tex_seq = generate(meshes, rig, cfg, denoiser)
    if cfg.keyframe_interval > 1 and meshes.frame_count >= 2:
        tex_seq = interpolate_keyframes(tex_seq, cfg.keyframe_interval)
    elapsed = time.perf_counter() - t0
    export_textures(tex_seq, out / "textures")
    manifest = {
        "version": __version__,
        "numpy": np.__version__,
        "config": {f.name: getattr(cfg, f.name) for f in fields(PipelineConfig)},
        "frames": meshes.frame_count,
        "views": len(rig),
        "elapsed_seconds": elapsed,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str))
    print(f"done in {elapsed:.1f}s; textures in {out / 'textures'}")
    denoiser.close()
    return 0


def _parse_camera_spec(spec: str):
    values = {"azim": 0.0, "elev": 0.0, "radius": 2.5, "fov": 45.0, "res": 256}
    for token in spec.split(","):
        if not token:
            continue
        key, _, val = token.partition("=")
        if key not in values:
            raise InvalidArgument(f"unknown camera spec key {key!r}")
        values[key] = int(val) if key == "res" else float(val)
    return orbit_camera(
        radius=values["radius"], azimuth=math.radians(values["azim"]),
        elevation=math.radians(values["elev"]),
        vertical_fov=math.radians(values["fov"]),
        resolution=(int(values["res"]), int(values["res"])),
    )


def _cmd_render(args) -> int:
    tex_dir = Path(args.textures)
    key_paths = sorted(tex_dir.glob("texture_*.f32"))
    if not key_paths:
        raise InvalidArgument(f"no texture_*.f32 files in {tex_dir}")
    textures = np.stack([gridio.load_grid(p) for p in key_paths])
    interp_paths = sorted(tex_dir.glob("interp_*.f32"))
    interpolated = (np.stack([gridio.load_grid(p) for p in interp_paths])
                    if interp_paths else None)
    interval = 1
    if interpolated is not None and textures.shape[0] > 1:
        interval = (interpolated.shape[0] - 1) // (textures.shape[0] - 1)
    seq = TextureSequence(
        textures=textures,
        coverage=np.ones(textures.shape[:1] + textures.shape[2:], dtype=np.float32),
        filled=np.ones(textures.shape[:1] + textures.shape[2:], dtype=bool),
        interpolated=interpolated, interval=max(interval, 1),
    )
    meshes = load_mesh_sequence(args.mesh_dir, pattern=args.pattern)
    camera = _parse_camera_spec(args.camera)
    report = render_sequence(meshes, seq, camera, args.out)
    print(f"rendered {len(report['paths'])} frames to {args.out}")
    return 0


def _cmd_validate(_args) -> int:
    from . import selfcheck

    results = selfcheck.run_all()
    failed = [name for name, ok, _ in results if not ok]
    for name, ok, detail in results:
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _cmd_bench(args) -> int:
    from .denoiser import OracleDenoiser
    from .pipeline import generate as run

    meshes = primitives.make_sphere(n_lat=12, n_lon=18, frames=args.frames)
    cfg = PipelineConfig(steps=args.steps, latent_resolution=96, uv_resolution=128,
                         seed=1)
    rig = default_rig(3.0, azimuth_count=args.views, top_view=False,
                      resolution=(96, 96))
    target = primitives.smooth_field(cfg.uv_resolution, cfg.channels, seed=2)
    denoiser = OracleDenoiser([target] * meshes.frame_count, meshes, rig)

    stamps = []
    run(meshes, rig, cfg, denoiser,
        step_callback=lambda snap: stamps.append(time.perf_counter()))
    deltas = np.diff(np.asarray(stamps))
    print(f"{args.frames} frames, {args.views} views, {args.steps} steps")
    if deltas.size:
        print(f"per-step: mean {deltas.mean() * 1e3:.1f} ms, "
              f"min {deltas.min() * 1e3:.1f} ms, max {deltas.max() * 1e3:.1f} ms")
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="uvsync", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="synthesize textures for a mesh sequence")
    gen.add_argument("--mesh-dir", required=True)
    gen.add_argument("--pattern", default="frame_%04d.obj")
    gen.add_argument("--prompt", default="")
    gen.add_argument("--config", default=None, help="TOML config file")
    gen.add_argument("--denoiser", default="oracle",
                     help="oracle | noisy-oracle | remote:HOST:PORT")
    gen.add_argument("--mode", default="proposed",
                     choices=["proposed", "agg-x0-eps", "agg-zprev"])
    gen.add_argument("--seed", type=int, default=None)
    gen.add_argument("--steps", type=int, default=None)
    gen.add_argument("--views", type=int, default=6)
    gen.add_argument("--no-top-view", action="store_true")
    gen.add_argument("--camera-radius", type=float, default=None)
    gen.add_argument("--oracle-texture", default=None,
                     help="PNG used as the oracle target (defaults to a smooth field)")
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=_cmd_generate)

    ren = sub.add_parser("render", help="render saved textures")
    ren.add_argument("--textures", required=True)
    ren.add_argument("--mesh-dir", required=True)
    ren.add_argument("--pattern", default="frame_%04d.obj")
    ren.add_argument("--camera", default="azim=30,elev=15,radius=2.5,fov=45,res=256")
    ren.add_argument("--out", required=True)
    ren.set_defaults(func=_cmd_render)

    val = sub.add_parser("validate", help="run the built-in invariant suite")
    val.set_defaults(func=_cmd_validate)

    ben = sub.add_parser("bench", help="per-step timing report")
    ben.add_argument("--frames", type=int, default=4)
    ben.add_argument("--views", type=int, default=4)
    ben.add_argument("--steps", type=int, default=10)
    ben.set_defaults(func=_cmd_bench)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UvSyncError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
