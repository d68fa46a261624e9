import socket
import threading
import time

import numpy as np
import pytest
from conftest import aligned_quad_setup, tetra_rig

from uvsync import primitives, wire
from uvsync.denoiser import (
    CallableDenoiser, DenoiseRequest, DenoiseResponse, NoisyOracleDenoiser,
    OracleDenoiser, RemoteDenoiser, validate_response,
)
from uvsync.errors import (
    BackendUnavailable, BridgeTimeout, InvalidArgument, ProtocolError, ShapeMismatch,
)
from uvsync.geometry import CameraRig
from uvsync.raster import render_buffers, render_texture


def make_request(view=0, t=5, k=1, c=3, l=16, prompt="x", params=None):
    return DenoiseRequest(
        view_id=view, timestep=t,
        latents=np.zeros((k, c, l, l), np.float32),
        depth_conditions=np.zeros((k, l, l), np.float32),
        prompt=prompt, params=params or {},
    )


def test_request_invariants():
    with pytest.raises(ShapeMismatch):
        DenoiseRequest(0, 1, np.zeros((2, 3, 4, 4), np.float32),
                       np.zeros((1, 4, 4), np.float32))
    with pytest.raises(ShapeMismatch):
        DenoiseRequest(0, 1, np.zeros((4, 4), np.float32),
                       np.zeros((1, 4, 4), np.float32))


def test_validate_response_boundary():
    req = make_request()
    good = DenoiseResponse("x0", np.zeros_like(req.latents))
    assert validate_response(req, good) is good
    with pytest.raises(ShapeMismatch):
        validate_response(req, DenoiseResponse("x0", np.zeros((1, 3, 8, 8), np.float32)))
    bad = np.zeros_like(req.latents)
    bad[0, 0, 0, 0] = np.nan
    with pytest.raises(BackendUnavailable):
        validate_response(req, DenoiseResponse("x0", bad))


def oracle_setup(l=24):
    quad, cam = aligned_quad_setup(l)
    rig = CameraRig((cam,))
    target = primitives.checkerboard(l, cells=4)
    return OracleDenoiser([target], quad, rig), quad, rig, target


def test_oracle_constant_target():
    quad, cam = aligned_quad_setup(16)
    rig = CameraRig((cam,))
    oracle = OracleDenoiser([np.full((3, 16, 16), 0.5, np.float32)], quad, rig)
    resp = oracle.denoise(make_request(l=16))
    assert resp.kind == "x0"
    buf = oracle.buffers(0, 0)
    cov = buf.fg_mask > 0
    assert np.all(resp.frames[0][:, cov] == 0.5)


def test_oracle_matches_render_texture_exactly():
    oracle, quad, rig, target = oracle_setup()
    resp = oracle.denoise(make_request(l=24))
    buf = render_buffers(quad.frame(0), rig[0], supersample=2)
    expected = render_texture(target, buf).astype(np.float32)
    assert np.array_equal(resp.frames[0], expected)


def test_oracle_background_request_zero():
    oracle, *_ = oracle_setup()
    resp = oracle.denoise(make_request(l=24, params={"background": True}))
    assert np.all(resp.frames == 0.0)


def test_noisy_oracle_sigma_zero_identical():
    oracle, *_ = oracle_setup()
    noisy = NoisyOracleDenoiser(oracle, sigma=0.0, seed=3)
    req = make_request(l=24)
    assert np.array_equal(noisy.denoise(req).frames, oracle.denoise(req).frames)


def test_noisy_oracle_std():
    oracle, *_ = oracle_setup(l=16)
    sigma = 0.1
    noisy = NoisyOracleDenoiser(oracle, sigma=sigma, seed=4)
    clean = oracle.denoise(make_request(l=16)).frames
    samples = []
    for t in range(1, 101):
        samples.append(noisy.denoise(make_request(l=16, t=t)).frames - clean)
    draws = np.stack(samples)
    n = draws.size
    sample_std = float(draws.std())
    assert abs(sample_std - sigma) < 3.0 * sigma / np.sqrt(2.0 * (n - 1))


def test_noisy_oracle_deterministic():
    oracle, *_ = oracle_setup(l=16)
    a = NoisyOracleDenoiser(oracle, sigma=0.2, seed=9).denoise(make_request(l=16))
    b = NoisyOracleDenoiser(oracle, sigma=0.2, seed=9).denoise(make_request(l=16))
    assert np.array_equal(a.frames, b.frames)
    c = NoisyOracleDenoiser(oracle, sigma=0.2, seed=10).denoise(make_request(l=16))
    assert not np.array_equal(a.frames, c.frames)


def test_noisy_oracle_rejects_negative_sigma():
    oracle, *_ = oracle_setup(l=16)
    with pytest.raises(InvalidArgument):
        NoisyOracleDenoiser(oracle, sigma=-0.5)


def test_callable_denoiser():
    toy = CallableDenoiser(lambda lat, dep, prompt, t: 0.5 * lat, kind="x0")
    req = make_request()
    out = toy.denoise(req)
    assert out.kind == "x0"
    assert np.array_equal(out.frames, 0.5 * req.latents)
    with pytest.raises(InvalidArgument):
        CallableDenoiser(lambda *a: a, kind="score")


# --- bridge client against a minimal in-test server -------------------------

class MiniServer(threading.Thread):
    """One-connection protocol server for client tests."""

    def __init__(self, behavior="echo", kind="x0", delay=0.0):
        super().__init__(daemon=True)
        self.behavior = behavior
        self.kind = kind
        self.delay = delay
        self.sock = socket.socket()
        self.sock.bind(("127.0.0.1", 0))
        self.sock.listen(1)
        self.port = self.sock.getsockname()[1]

    def run(self):
        conn, _ = self.sock.accept()
        stream = conn.makefile("rwb")
        try:
            msg, header, _ = wire.read_frame(stream)
            assert msg == wire.MSG_HELLO
            wire.write_frame(stream, wire.MSG_HELLO,
                             {"kind": self.kind, "concurrent": False})
            while True:
                msg, header, payload = wire.read_frame(stream)
                if self.delay:
                    time.sleep(self.delay)
                if self.behavior == "echo":
                    k, c = header["frame_count"], header["channels"]
                    h, w = header["height"], header["width"]
                    latents, _ = wire.decode_request_payload(payload, k, c, h, w)
                    wire.write_frame(
                        stream, wire.MSG_DENOISE_RESP,
                        {"kind": self.kind, "frame_count": k, "channels": c,
                         "height": h, "width": w, "dtype": "f32"},
                        wire.encode_tensor(latents),
                    )
                elif self.behavior == "truncate":
                    conn.sendall(wire.MAGIC + bytes([wire.VERSION, wire.MSG_DENOISE_RESP]))
                    conn.close()
                    return
                elif self.behavior == "error":
                    wire.write_frame(stream, wire.MSG_ERROR,
                                     {"code": "adapter-failed", "message": "boom"})
        except (ProtocolError, OSError, ValueError):
            pass
        finally:
            try:
                conn.close()
            except OSError:
                pass

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.sock.close()


def test_remote_echo_roundtrip_bitwise():
    with MiniServer("echo") as srv:
        client = RemoteDenoiser("127.0.0.1", srv.port, timeout=5.0)
        assert client.prediction_kind == "x0"
        req = make_request(k=2, c=3, l=8)
        rng = np.random.default_rng(0)
        latents = rng.standard_normal((2, 3, 8, 8)).astype(np.float32)
        req = DenoiseRequest(0, 5, latents, np.zeros((2, 8, 8), np.float32))
        resp = client.denoise(req)
        assert resp.frames.shape == req.latents.shape
        assert np.array_equal(resp.frames, latents)
        client.close()


def test_remote_server_closes_mid_message():
    with MiniServer("truncate") as srv:
        client = RemoteDenoiser("127.0.0.1", srv.port, timeout=5.0)
        with pytest.raises(ProtocolError):
            client.denoise(make_request(l=8))
        client.close()


def test_remote_error_frame():
    with MiniServer("error") as srv:
        client = RemoteDenoiser("127.0.0.1", srv.port, timeout=5.0)
        with pytest.raises(BackendUnavailable):
            client.denoise(make_request(l=8))
        client.close()


def test_remote_timeout():
    with MiniServer("echo", delay=2.0) as srv:
        client = RemoteDenoiser("127.0.0.1", srv.port, timeout=0.3)
        with pytest.raises(BridgeTimeout):
            client.denoise(make_request(l=8))
        client.close()


def test_remote_unreachable():
    with pytest.raises(BackendUnavailable):
        RemoteDenoiser("127.0.0.1", 1, timeout=0.5)


def test_remote_from_spec():
    with pytest.raises(InvalidArgument):
        RemoteDenoiser.from_spec("no-port-here")


def test_toy_model_remote_matches_in_process():
    # the same deterministic toy model, linked in-process and over the wire
    def toy(latents, depths, prompt, t):
        return np.tanh(latents) * 0.5 + 0.1

    class ToyServer(MiniServer):
        def run(self):
            conn, _ = self.sock.accept()
            stream = conn.makefile("rwb")
            msg, _, _ = wire.read_frame(stream)
            wire.write_frame(stream, wire.MSG_HELLO, {"kind": "x0"})
            try:
                while True:
                    msg, header, payload = wire.read_frame(stream)
                    k, c = header["frame_count"], header["channels"]
                    h, w = header["height"], header["width"]
                    latents, depths = wire.decode_request_payload(payload, k, c, h, w)
                    out = toy(latents, depths, header["prompt"],
                              header["timestep"]).astype(np.float32)
                    wire.write_frame(
                        stream, wire.MSG_DENOISE_RESP,
                        {"kind": "x0", "frame_count": k, "channels": c,
                         "height": h, "width": w, "dtype": "f32"},
                        wire.encode_tensor(out),
                    )
            except (ProtocolError, OSError):
                pass

    rng = np.random.default_rng(1)
    latents = rng.standard_normal((2, 3, 12, 12)).astype(np.float32)
    req = DenoiseRequest(0, 7, latents, np.zeros((2, 12, 12), np.float32))
    local = CallableDenoiser(toy, kind="x0").denoise(req)
    with ToyServer() as srv:
        client = RemoteDenoiser("127.0.0.1", srv.port, timeout=5.0)
        remote = client.denoise(req)
        client.close()
    assert np.abs(remote.frames - local.frames).max() < 1e-6


def test_prediction_kind_normalization_through_pipeline_boundary():
    # all three kinds of one consistent triple give the same clean estimate
    from uvsync.schedule import Prediction, make_schedule, prediction_to_x0

    sched = make_schedule(50)
    t = 20
    ab = sched.at(t)
    rng = np.random.default_rng(2)
    x0 = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
    e = rng.standard_normal((1, 3, 8, 8)).astype(np.float32)
    z = (np.sqrt(ab) * x0 + np.sqrt(1 - ab) * e).astype(np.float32)
    v = (np.sqrt(ab) * e - np.sqrt(1 - ab) * x0).astype(np.float32)
    ref = prediction_to_x0(Prediction("x0", x0), z, t, sched)
    for kind, tensor in [("epsilon", e), ("v", v)]:
        got = prediction_to_x0(Prediction(kind, tensor), z, t, sched)
        assert np.abs(got - ref).max() < 1e-6
