"""Quick built-in invariant suite behind the `uvsync validate` command.

These checks duplicate a slice of the test suite so a deployed install
can be sanity-checked without pytest. Each check returns (name, ok,
one-line detail).
"""

from __future__ import annotations

import numpy as np

from . import primitives, raster, schedule, uvdiff


def _check_schedule_identities():
    sched = schedule.make_schedule(50)
    rng = np.random.default_rng(0)
    t = 17
    x0 = rng.standard_normal(1000)
    eps = rng.standard_normal(1000)
    ab = sched.at(t)
    z = np.sqrt(ab) * x0 + np.sqrt(1 - ab) * eps
    r1 = np.abs(schedule.x0_from_eps(z, eps, t, sched) - x0).max()
    r2 = np.abs(schedule.implied_eps(z, x0, t, sched) - eps).max()
    ok = r1 < 1e-10 and r2 < 1e-9
    return "schedule forward/inverse identities", ok, f"residuals {r1:.2e}, {r2:.2e}"


def _check_uv_step_identity():
    sched = schedule.make_schedule(50)
    rng = np.random.default_rng(1)
    t = 30
    cur = rng.standard_normal((3, 32, 32))
    clean = rng.standard_normal((3, 32, 32))
    tex_t = uvdiff.LatentTexture(cur, np.ones((32, 32)))
    tex_0 = uvdiff.LatentTexture(clean, np.ones((32, 32)))
    via_uv = uvdiff.uv_ddim_step(tex_t, tex_0, t, sched).values
    eps = schedule.implied_eps(cur, clean, t, sched)
    via_ddim = schedule.ddim_step(cur, clean, eps, t, sched)
    diff = np.abs(via_uv - via_ddim).max()
    return "UV step equals DDIM with implied noise", diff < 1e-9, f"max diff {diff:.2e}"


def _check_aggregation_variance():
    rng = np.random.default_rng(2)
    parts = [
        raster.PartialTexture(rng.standard_normal((1, 100, 100)), np.ones((100, 100)))
        for _ in range(6)
    ]
    agg = uvdiff.aggregate_views(parts, uvdiff.AggregationConfig(cosine_exponent=1.0))
    var = float(agg.values.var())
    ok = abs(var - 1.0 / 6.0) < 0.01
    return "equal-weight aggregation variance 1/6", ok, f"sample variance {var:.4f}"


def _check_raster_roundtrip():
    from .geometry import orbit_camera

    meshes = primitives.make_sphere(n_lat=12, n_lon=18)
    cam = orbit_camera(3.0, 0.3, 0.2, resolution=(128, 128))
    tex = primitives.smooth_field(128, 3, seed=3)
    frame = meshes.frame(0)
    buffers = raster.render_buffers(frame, cam)
    img = raster.render_texture(tex, buffers)
    part = raster.unproject(img, frame, cam, 128, buffers=buffers)
    live = part.weight > 0
    rms = float(np.sqrt(np.mean((part.values[:, live] - tex.astype(np.float64)[:, live]) ** 2)))
    return "render/unproject round trip", rms < 0.01, f"RMS {rms:.4f}"


def _check_blend_exactness():
    rng = np.random.default_rng(4)
    vals = rng.standard_normal((2, 16, 16))
    tex = uvdiff.LatentTexture(vals, np.ones((16, 16)))
    ref = uvdiff.ReferenceTexture(rng.standard_normal((2, 16, 16)), np.ones((16, 16), bool))
    ones = np.ones((16, 16))
    same = np.array_equal(uvdiff.blend_with_reference(tex, ref, ones, 0.0).values, vals)
    repl = np.array_equal(
        uvdiff.blend_with_reference(tex, ref, np.zeros((16, 16)), 0.5).values, ref.values
    )
    return "reference blend closed forms", same and repl, f"identity={same} replace={repl}"


def run_all():
    checks = [
        _check_schedule_identities,
        _check_uv_step_identity,
        _check_aggregation_variance,
        _check_raster_roundtrip,
        _check_blend_exactness,
    ]
    results = []
    for check in checks:
        try:
            results.append(check())
        except Exception as err:  # a crash is a failure, not an abort
            results.append((check.__name__, False, f"raised {err!r}"))
    return results
