#!/usr/bin/env python3
"""Drive the pipeline through the wire protocol against a live server.

Starts the reference bridge server (the separate `texbridge` package)
with its echo-style toy adapter, connects a RemoteDenoiser to it, and
checks that the remote run reproduces the same model linked in-process.
Skips politely if texbridge is not installed.
"""

import math
import sys
import threading

import numpy as np

try:
    from texbridge.adapters import BackendAdapter
    from texbridge.server import BridgeServer
except ImportError:
    print("texbridge is not installed; run `pip install -e bridge/` first")
    sys.exit(0)

from uvsync.denoiser import CallableDenoiser, RemoteDenoiser
from uvsync.geometry import Camera, CameraRig
from uvsync.pipeline import PipelineConfig, generate
from uvsync.primitives import make_quad


def toy_model(latents, depths, prompt, t):
    return np.tanh(latents.astype(np.float64)) * 0.45 + 0.3


adapter = BackendAdapter(kind="x0", fn=toy_model)
server = BridgeServer("127.0.0.1", 0, adapter)
threading.Thread(target=server.serve_forever, daemon=True).start()
print(f"bridge server listening on port {server.port}")

size, dist, lat = 1.0, 4.0, 48
quad = make_quad(size=size)
cam = Camera(position=(0, 0, dist), vertical_fov=2 * math.atan(size / 2 / dist),
             resolution=(lat, lat))
rig = CameraRig((cam,))
cfg = PipelineConfig(steps=10, latent_resolution=lat, uv_resolution=lat, seed=2,
                     background=False, blend_lambda=0.0, supersample=1, cos_min=0.0)

local = generate(quad, rig, cfg, CallableDenoiser(toy_model, kind="x0"))
remote_denoiser = RemoteDenoiser("127.0.0.1", server.port)
remote = generate(quad, rig, cfg, remote_denoiser)
remote_denoiser.close()
server.shutdown()

diff = np.abs(local.textures - remote.textures).max()
print(f"max |in-process - remote| over finalized textures: {diff:.2e}")
print("PASS" if diff < 1e-6 else "FAIL")
