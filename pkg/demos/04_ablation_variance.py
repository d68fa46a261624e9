#!/usr/bin/env python3
"""Reproduce the variance-shift behavior of the aggregation baselines.

Runs the flat-atlas setup in all three modes and prints, per step, the
texel std of the carried latent texture normalized by the schedule's
sqrt(1 - alpha_bar). The proposed UV-space step stays at ~1.0; baking
stepped latents (or clean estimate plus noise) collapses toward 1/sqrt(V)
and below, which is what blurs those baselines.
"""

import math

import numpy as np

from uvsync import make_schedule
from uvsync.denoiser import OracleDenoiser
from uvsync.geometry import Camera, CameraRig
from uvsync.pipeline import PipelineConfig, generate
from uvsync.primitives import make_quad

SIZE, DIST, LAT, STEPS, VIEWS = 1.0, 4.0, 64, 50, 6

quad = make_quad(size=SIZE)
fov = 2.0 * math.atan((SIZE / 2.0) / DIST)
spreads = [(0, 0), (10, 4), (-10, -4), (20, -6), (-20, 6), (5, -10)]
cams = []
for az_deg, el_deg in spreads[:VIEWS]:
    az, el = math.radians(az_deg), math.radians(el_deg)
    pos = (DIST * math.sin(az) * math.cos(el), DIST * math.sin(el),
           DIST * math.cos(az) * math.cos(el))
    cams.append(Camera(position=pos, vertical_fov=fov * 1.3, resolution=(LAT, LAT)))
rig = CameraRig(tuple(cams))

oracle = OracleDenoiser([np.full((3, LAT, LAT), 0.3, np.float32)], quad, rig)
sched = make_schedule(STEPS)

curves = {}
for mode in ("proposed", "agg-zprev", "agg-x0-eps"):
    cfg = PipelineConfig(steps=STEPS, latent_resolution=LAT, uv_resolution=LAT,
                         seed=5, blend_lambda=0.0, background=False, mode=mode,
                         cos_min=0.1)
    ratios = []

    def cb(snap):
        ab_prev = sched.at(snap.t - 1)
        if 1.0 - ab_prev < 1e-8:
            return
        live = snap.t0_hats[0].covered()
        resid = (snap.textures[0].values.astype(np.float64)[:, live]
                 - np.sqrt(ab_prev) * snap.t0_hats[0].values[:, live])
        ratios.append(float(resid.std()) / math.sqrt(1.0 - ab_prev))

    generate(quad, rig, cfg, oracle, step_callback=cb)
    curves[mode] = ratios

print(f"texel std of the latent texture / sqrt(1 - alpha_bar), {VIEWS} views")
print(f"{'step':>5} " + " ".join(f"{m:>12}" for m in curves))
n = len(curves["proposed"])
for i in range(0, n, max(n // 12, 1)):
    row = " ".join(f"{curves[m][i]:>12.4f}" for m in curves)
    print(f"{i:>5} {row}")
print(f"\nexpected collapse for equal-weight averaging: 1/sqrt({VIEWS}) = "
      f"{1.0 / math.sqrt(VIEWS):.4f}")
