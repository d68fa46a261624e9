"""The pluggable denoising backend seat.

The sampling engine never links a real video diffusion network; it
talks to anything implementing Denoiser.denoise. Built-in backends:

- OracleDenoiser: returns exact renders of known target textures as
  clean-sample predictions, making end-to-end convergence checkable.
- NoisyOracleDenoiser: the oracle plus seed-deterministic Gaussian noise.
- CallableDenoiser: wraps a plain function, e.g. a toy model.
- RemoteDenoiser: speaks the bridge wire protocol to an external process.

A backend declares its prediction kind once (epsilon, v, or x0); the
pipeline normalizes every response to a clean-sample estimate and never
trusts response shapes without checking them.
"""

from __future__ import annotations

import socket
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import wire
from .errors import BackendUnavailable, InvalidArgument, ProtocolError, ShapeMismatch
from .geometry import CameraRig, MeshSequence
from .raster import RenderBuffers, render_buffers, render_texture
from .schedule import PREDICTION_KINDS


@dataclass(frozen=True)
class DenoiseRequest:
    """All frames of one view at one timestep, plus conditioning."""

    view_id: int
    timestep: int
    latents: np.ndarray            # (K, C, H, W)
    depth_conditions: np.ndarray   # (K, H, W), 0 encodes background/far
    prompt: str = ""
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.latents.ndim != 4:
            raise ShapeMismatch(f"latents must be (K, C, H, W), got {self.latents.shape}")
        k, _, h, w = self.latents.shape
        if k < 1:
            raise InvalidArgument("a request needs at least one frame")
        if self.depth_conditions.shape != (k, h, w):
            raise ShapeMismatch(
                f"depth conditions {self.depth_conditions.shape} do not match "
                f"latents {self.latents.shape}"
            )


@dataclass(frozen=True)
class DenoiseResponse:
    """One prediction per requested frame."""

    kind: str
    frames: np.ndarray  # (K, C, H, W)

    def __post_init__(self):
        if self.kind not in PREDICTION_KINDS:
            raise InvalidArgument(f"prediction kind must be one of {PREDICTION_KINDS}")
        if self.frames.ndim != 4:
            raise ShapeMismatch(f"frames must be (K, C, H, W), got {self.frames.shape}")


def validate_response(request: DenoiseRequest, response: DenoiseResponse) -> DenoiseResponse:
    """Boundary check applied to every backend output before use."""
    if response.frames.shape != request.latents.shape:
        raise ShapeMismatch(
            f"backend returned {response.frames.shape}, request was {request.latents.shape}"
        )
    if not np.all(np.isfinite(response.frames)):
        raise BackendUnavailable("backend returned non-finite values")
    return response


class Denoiser:
    """Interface: one jointly-predicted response per per-view request."""

    prediction_kind: str = "x0"
    concurrent_safe: bool = True

    def denoise(self, request: DenoiseRequest) -> DenoiseResponse:
        raise NotImplementedError

    def close(self) -> None:
        pass


class OracleDenoiser(Denoiser):
    """Backend that always answers with renders of known target textures.

    Ignores the request latents and returns kind="x0" frames rendered
    from per-frame targets into the requesting view. Background requests
    (params["background"] truthy) get all-zero frames, matching what the
    render would show with no geometry.
    """

    prediction_kind = "x0"

    def __init__(self, target_textures: Sequence[np.ndarray] | np.ndarray,
                 meshes: MeshSequence, rig: CameraRig, supersample: int = 2):
        targets = [np.asarray(getattr(t, "values", t), dtype=np.float64)
                   for t in target_textures]
        if len(targets) != meshes.frame_count:
            raise ShapeMismatch(
                f"{len(targets)} targets for {meshes.frame_count} mesh frames"
            )
        shape = targets[0].shape
        for t in targets:
            if t.shape != shape:
                raise ShapeMismatch("target textures disagree on shape")
        self.targets = targets
        self.meshes = meshes
        self.rig = rig
        self.supersample = supersample
        self._buffers: dict[tuple[int, int], RenderBuffers] = {}

    def buffers(self, view_id: int, frame: int) -> RenderBuffers:
        key = (view_id, frame)
        if key not in self._buffers:
            self._buffers[key] = render_buffers(
                self.meshes.frame(frame), self.rig[view_id], supersample=self.supersample
            )
        return self._buffers[key]

    def denoise(self, request: DenoiseRequest) -> DenoiseResponse:
        k, c, h, w = request.latents.shape
        if request.params.get("background"):
            return DenoiseResponse(kind="x0", frames=np.zeros((k, c, h, w), dtype=np.float32))
        if not 0 <= request.view_id < len(self.rig):
            raise InvalidArgument(f"view_id {request.view_id} outside rig")
        cam = self.rig[request.view_id]
        if cam.resolution != (w, h):
            raise ShapeMismatch(
                f"request resolution {(w, h)} does not match camera {cam.resolution}"
            )
        frames = np.empty((k, c, h, w), dtype=np.float32)
        for frame in range(k):
            img = render_texture(self.targets[frame], self.buffers(request.view_id, frame))
            if img.shape[0] != c:
                raise ShapeMismatch(
                    f"target has {img.shape[0]} channels, request has {c}"
                )
            frames[frame] = img.astype(np.float32)
        return DenoiseResponse(kind="x0", frames=frames)


class NoisyOracleDenoiser(Denoiser):
    """Oracle plus i.i.d. Gaussian noise, seeded per (view, frame, timestep)."""

    prediction_kind = "x0"

    def __init__(self, oracle: OracleDenoiser, sigma: float, seed: int = 0):
        if sigma < 0.0:
            raise InvalidArgument(f"sigma must be >= 0, got {sigma}")
        self.oracle = oracle
        self.sigma = float(sigma)
        self.seed = int(seed)

    def denoise(self, request: DenoiseRequest) -> DenoiseResponse:
        clean = self.oracle.denoise(request)
        if self.sigma == 0.0:
            return clean
        frames = clean.frames.copy()
        for frame in range(frames.shape[0]):
            rng = np.random.default_rng(
                np.random.SeedSequence(
                    entropy=self.seed,
                    spawn_key=(request.view_id, frame, request.timestep),
                )
            )
            frames[frame] += self.sigma * rng.standard_normal(
                frames.shape[1:], dtype=np.float32
            )
        return DenoiseResponse(kind="x0", frames=frames)


class CallableDenoiser(Denoiser):
    """Adapter for a plain function (latents, depths, prompt, t) -> frames."""

    def __init__(self, fn: Callable[[np.ndarray, np.ndarray, str, int], np.ndarray],
                 kind: str = "x0"):
        if kind not in PREDICTION_KINDS:
            raise InvalidArgument(f"prediction kind must be one of {PREDICTION_KINDS}")
        self.fn = fn
        self.prediction_kind = kind

    def denoise(self, request: DenoiseRequest) -> DenoiseResponse:
        frames = np.asarray(
            self.fn(request.latents, request.depth_conditions, request.prompt,
                    request.timestep),
            dtype=np.float32,
        )
        return DenoiseResponse(kind=self.prediction_kind, frames=frames)


class RemoteDenoiser(Denoiser):
    """Client for an out-of-process backend speaking the bridge protocol.

    Connects eagerly, performs the HELLO handshake to learn the backend's
    declared prediction kind, and then issues one DENOISE_REQ per call.
    """

    def __init__(self, host: str, port: int, timeout: float = 30.0):
        self.address = (host, int(port))
        self.timeout = timeout
        try:
            self._sock = socket.create_connection(self.address, timeout=timeout)
        except OSError as err:
            raise BackendUnavailable(f"cannot reach bridge at {host}:{port}: {err}") from err
        self._sock.settimeout(timeout)
        self._stream = self._sock.makefile("rwb")
        wire.write_frame(self._stream, wire.MSG_HELLO, {"role": "client", "dtype": "f32"})
        msg_type, header, _ = wire.read_frame(self._stream)
        if msg_type == wire.MSG_ERROR:
            raise BackendUnavailable(
                f"bridge refused handshake: {header.get('code')}: {header.get('message')}"
            )
        if msg_type != wire.MSG_HELLO:
            raise ProtocolError(f"expected HELLO reply, got message type {msg_type}")
        kind = header.get("kind")
        if kind not in PREDICTION_KINDS:
            raise ProtocolError(f"bridge declared invalid prediction kind {kind!r}")
        self.prediction_kind = kind
        self.concurrent_safe = bool(header.get("concurrent", False))

    @classmethod
    def from_spec(cls, spec: str, timeout: float = 30.0) -> "RemoteDenoiser":
        """Parse 'host:port' (the CLI's remote:HOST:PORT tail)."""
        host, _, port = spec.rpartition(":")
        if not host or not port.isdigit():
            raise InvalidArgument(f"remote denoiser spec must be HOST:PORT, got {spec!r}")
        return cls(host, int(port), timeout=timeout)

    def denoise(self, request: DenoiseRequest) -> DenoiseResponse:
        k, c, h, w = request.latents.shape
        header = wire.request_header(
            timestep=request.timestep, view_id=request.view_id, frame_count=k,
            channels=c, height=h, width=w, prompt=request.prompt,
            kind_expectation=self.prediction_kind, params=request.params,
        )
        payload = wire.encode_request_payload(request.latents, request.depth_conditions)
        wire.write_frame(self._stream, wire.MSG_DENOISE_REQ, header, payload)
        msg_type, reply, body = wire.read_frame(self._stream)
        if msg_type == wire.MSG_ERROR:
            raise BackendUnavailable(
                f"bridge error {reply.get('code')}: {reply.get('message')}"
            )
        if msg_type != wire.MSG_DENOISE_RESP:
            raise ProtocolError(f"expected DENOISE_RESP, got message type {msg_type}")
        try:
            shape = (int(reply["frame_count"]), int(reply["channels"]),
                     int(reply["height"]), int(reply["width"]))
            kind = reply["kind"]
        except (KeyError, TypeError, ValueError) as err:
            raise ProtocolError(f"malformed response header: {err}") from err
        if kind not in PREDICTION_KINDS:
            raise ProtocolError(f"response declared invalid prediction kind {kind!r}")
        frames = wire.decode_tensor(body, shape)
        return DenoiseResponse(kind=kind, frames=frames)

    def close(self) -> None:
        try:
            self._stream.close()
        finally:
            self._sock.close()
