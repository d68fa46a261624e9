#!/usr/bin/env python3
"""Walk through the noise schedule and the DDIM step arithmetic.

Builds the default linear-beta schedule and a cosine schedule, prints a
few alpha_bar rows, then demonstrates that the three prediction kinds
(clean sample, noise, v) all recover the same clean estimate, and that
the UV-space step formula is the plain DDIM step in disguise.
"""

import numpy as np

from uvsync import make_schedule
from uvsync.schedule import (
    ddim_step, eps_from_v, implied_eps, prediction_to_x0, Prediction, x0_from_v,
)
from uvsync.uvdiff import LatentTexture, uv_ddim_step

T = 50
lin = make_schedule(T)
cos = make_schedule(T, kind="cosine")

print(f"schedules over T={T} steps (alpha_bar at a few timesteps)")
print(f"{'t':>4} {'linear-beta':>14} {'cosine':>14} {'sqrt(1-ab) lin':>15}")
for t in [0, 1, 10, 25, 40, 50]:
    print(f"{t:>4} {lin.at(t):>14.6f} {cos.at(t):>14.6f} "
          f"{np.sqrt(1 - lin.at(t)):>15.6f}")

rng = np.random.default_rng(0)
t = 30
ab = lin.at(t)
x0 = rng.standard_normal((3, 8, 8))
eps = rng.standard_normal((3, 8, 8))
z = np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps
v = np.sqrt(ab) * eps - np.sqrt(1 - ab) * x0

print("\nprediction-kind normalization at t =", t)
for kind, tensor in [("x0", x0), ("epsilon", eps), ("v", v)]:
    est = prediction_to_x0(Prediction(kind, tensor), z, t, lin)
    print(f"  kind={kind:<8} max |estimate - true x0| = {np.abs(est - x0).max():.3e}")

print("\nv-parameterization round trip")
print("  x0_from_v  residual:", np.abs(x0_from_v(z, v, t, lin) - x0).max())
print("  eps_from_v residual:", np.abs(eps_from_v(z, v, t, lin) - eps).max())

print("\nUV-space step vs plain DDIM step with implied noise")
cur = rng.standard_normal((1, 16, 16))
clean = rng.standard_normal((1, 16, 16))
via_uv = uv_ddim_step(LatentTexture(cur, np.ones((16, 16))),
                      LatentTexture(clean, np.ones((16, 16))), t, lin).values
via_ddim = ddim_step(cur, clean, implied_eps(cur, clean, t, lin), t, lin)
print("  max abs difference:", np.abs(via_uv - via_ddim).max())
