#!/usr/bin/env python3
"""End-to-end synthesis on an animated sphere with the oracle backend.

The oracle returns renders of a known target texture as its clean-sample
predictions, so the synchronized diffusion loop should converge to that
target. Writes per-frame textures, interpolated in-betweens, and a
turntable render to demos/out/oracle/.
"""

import math
import time
from pathlib import Path

import numpy as np

from uvsync import orbit_camera
from uvsync.denoiser import OracleDenoiser
from uvsync.geometry import CameraRig
from uvsync.pipeline import (
    PipelineConfig, export_textures, generate, interpolate_keyframes,
    render_sequence,
)
from uvsync.primitives import make_sphere, smooth_field

out = Path(__file__).parent / "out" / "oracle"
K = 4

meshes = make_sphere(n_lat=16, n_lon=24, frames=K, wobble=0.15)
rig = CameraRig(tuple(
    orbit_camera(3.2, math.radians(az), math.radians(el), resolution=(96, 96))
    for az, el in [(0, 35), (90, -35), (180, 35), (270, -35)]
))
target = smooth_field(192, channels=3, seed=11)
oracle = OracleDenoiser([target] * K, meshes, rig)

config = PipelineConfig(steps=50, latent_resolution=96, uv_resolution=192,
                        seed=3, cos_min=0.25, keyframe_interval=3)

start = time.perf_counter()
tex_seq = generate(meshes, rig, config, oracle)
tex_seq = interpolate_keyframes(tex_seq, config.keyframe_interval)
print(f"generated {tex_seq.frame_count} keyframe textures "
      f"(+{tex_seq.output_frames().shape[0] - tex_seq.frame_count} interpolated) "
      f"in {time.perf_counter() - start:.1f}s")

for k in range(K):
    cov = tex_seq.coverage[k] > 0
    err = tex_seq.textures[k].astype(np.float64)[:, cov] - target.astype(np.float64)[:, cov]
    print(f"frame {k}: RMS vs target on covered texels = {np.sqrt((err ** 2).mean()):.5f}")

export_textures(tex_seq, out / "textures")
report = render_sequence(meshes, tex_seq, rig, out / "renders")
stds = [f.get("mean_std") for f in report["frames"] if "mean_std" in f]
print(f"cross-view consistency (mean per-texel std): {np.mean(stds):.5f}")
print(f"outputs in {out}")
