"""Framing for the denoiser bridge protocol.

Every message is one frame on a byte stream:

    magic  "TX4D"            4 bytes
    version                  u8, currently 1
    message type             u8
    header length            u32 little-endian
    header                   UTF-8 JSON object
    payload length           u64 little-endian
    payload                  raw bytes

Message types: HELLO (1, capability/kind handshake), DENOISE_REQ (2),
DENOISE_RESP (3), ERROR (4, header carries code and message). Tensor
payloads are C-order little-endian float32; a request concatenates the
K latent frames then the K depth frames, a response carries the K
prediction frames.
"""

from __future__ import annotations

import json
import socket
import struct

import numpy as np

from .errors import BridgeTimeout, ProtocolError

MAGIC = b"TX4D"
VERSION = 1

MSG_HELLO = 1
MSG_DENOISE_REQ = 2
MSG_DENOISE_RESP = 3
MSG_ERROR = 4

_PREFIX = struct.Struct("<4sBBI")
_PAYLOAD_LEN = struct.Struct("<Q")

MAX_HEADER_BYTES = 1 << 20
MAX_PAYLOAD_BYTES = 1 << 32


def write_frame(stream, msg_type: int, header: dict, payload: bytes = b"") -> None:
    """Serialize one frame onto a writable binary stream."""
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    stream.write(_PREFIX.pack(MAGIC, VERSION, msg_type, len(head)))
    stream.write(head)
    stream.write(_PAYLOAD_LEN.pack(len(payload)))
    stream.write(payload)
    stream.flush()


def _read_exact(stream, n: int) -> bytes:
    """Read exactly n bytes or raise; short reads mean a broken frame."""
    chunks = []
    remaining = n
    while remaining > 0:
        try:
            chunk = stream.read(remaining)
        except socket.timeout as err:
            raise BridgeTimeout("timed out waiting for bridge data") from err
        except TimeoutError as err:
            raise BridgeTimeout("timed out waiting for bridge data") from err
        if not chunk:
            raise ProtocolError(f"stream closed mid-frame ({n - remaining}/{n} bytes read)")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(stream) -> tuple[int, dict, bytes]:
    """Read one frame; raises ProtocolError on any framing violation."""
    prefix = _read_exact(stream, _PREFIX.size)
    magic, version, msg_type, header_len = _PREFIX.unpack(prefix)
    if magic != MAGIC:
        raise ProtocolError(f"bad magic {magic!r}")
    if version != VERSION:
        raise ProtocolError(f"unsupported protocol version {version}")
    if header_len > MAX_HEADER_BYTES:
        raise ProtocolError(f"header length {header_len} exceeds limit")
    try:
        header = json.loads(_read_exact(stream, header_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ProtocolError(f"undecodable frame header: {err}") from err
    if not isinstance(header, dict):
        raise ProtocolError("frame header must be a JSON object")
    (payload_len,) = _PAYLOAD_LEN.unpack(_read_exact(stream, _PAYLOAD_LEN.size))
    if payload_len > MAX_PAYLOAD_BYTES:
        raise ProtocolError(f"payload length {payload_len} exceeds limit")
    payload = _read_exact(stream, payload_len)
    return msg_type, header, payload


def encode_tensor(array: np.ndarray) -> bytes:
    return np.ascontiguousarray(array, dtype="<f4").tobytes()


def decode_tensor(payload: bytes, shape: tuple[int, ...]) -> np.ndarray:
    expected = int(np.prod(shape)) * 4
    if len(payload) != expected:
        raise ProtocolError(
            f"payload holds {len(payload)} bytes, header implies {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").reshape(shape).copy()


def request_header(timestep: int, view_id: int, frame_count: int, channels: int,
                   height: int, width: int, prompt: str, kind_expectation: str,
                   params: dict | None = None) -> dict:
    return {
        "timestep": timestep,
        "view_id": view_id,
        "frame_count": frame_count,
        "channels": channels,
        "height": height,
        "width": width,
        "prompt": prompt,
        "kind_expectation": kind_expectation,
        "dtype": "f32",
        "params": params or {},
    }


def encode_request_payload(latents: np.ndarray, depths: np.ndarray) -> bytes:
    return encode_tensor(latents) + encode_tensor(depths)


def decode_request_payload(payload: bytes, frame_count: int, channels: int,
                           height: int, width: int) -> tuple[np.ndarray, np.ndarray]:
    lat_bytes = frame_count * channels * height * width * 4
    dep_bytes = frame_count * height * width * 4
    if len(payload) != lat_bytes + dep_bytes:
        raise ProtocolError(
            f"request payload holds {len(payload)} bytes, "
            f"header implies {lat_bytes + dep_bytes}"
        )
    latents = decode_tensor(payload[:lat_bytes], (frame_count, channels, height, width))
    depths = decode_tensor(payload[lat_bytes:], (frame_count, height, width))
    return latents, depths
