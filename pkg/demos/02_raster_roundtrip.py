#!/usr/bin/env python3
"""Render a textured sphere, bake the image back to UV space, compare.

Writes the rendered view, the recovered texture, and all debug buffers
to demos/out/raster/. The printed RMS is the render -> unproject error
on texels the view can actually see.
"""

from pathlib import Path

import numpy as np

from uvsync import gridio, orbit_camera
from uvsync.primitives import make_sphere, smooth_field
from uvsync.raster import dump_buffers, render_buffers, render_texture, unproject
from uvsync.uvdiff import dilate_texture

out = Path(__file__).parent / "out" / "raster"
out.mkdir(parents=True, exist_ok=True)

sphere = make_sphere(n_lat=16, n_lon=24)
frame = sphere.frame(0)
camera = orbit_camera(3.0, 0.4, 0.2, resolution=(256, 256))
texture = smooth_field(512, channels=3, seed=5).astype(np.float64)

buffers = render_buffers(frame, camera, supersample=2)
image = render_texture(texture, buffers)
partial = unproject(image, frame, camera, 512, buffers=buffers)

live = partial.weight > 0
err = partial.values[:, live] - texture[:, live]
print(f"visible texels: {live.sum()} / {512 * 512}")
print(f"round-trip RMS on visible texels: {np.sqrt((err ** 2).mean()):.5f}")

padded, _ = dilate_texture(partial.values, live, None)
gridio.save_image(out / "target_texture.png", texture, lo=0, hi=1)
gridio.save_image(out / "rendered_view.png", image, lo=0, hi=1)
gridio.save_image(out / "recovered_texture.png", padded, lo=0, hi=1)
gridio.save_image(out / "weights.png", partial.weight)
dump_buffers(buffers, out, prefix="buffers")
print(f"wrote images to {out}")
