import io

import numpy as np
import pytest

from uvsync import wire
from uvsync.errors import ProtocolError


def roundtrip(msg_type, header, payload=b""):
    buf = io.BytesIO()
    wire.write_frame(buf, msg_type, header, payload)
    buf.seek(0)
    return wire.read_frame(buf)


def test_frame_roundtrip():
    msg, header, payload = roundtrip(wire.MSG_HELLO, {"kind": "x0"}, b"abc")
    assert msg == wire.MSG_HELLO
    assert header == {"kind": "x0"}
    assert payload == b"abc"


def test_frame_layout_grammar():
    buf = io.BytesIO()
    wire.write_frame(buf, wire.MSG_DENOISE_REQ, {"a": 1}, b"\x01\x02")
    raw = buf.getvalue()
    assert raw[:4] == b"TX4D"
    assert raw[4] == 1                       # version
    assert raw[5] == wire.MSG_DENOISE_REQ    # message type
    header_len = int.from_bytes(raw[6:10], "little")
    header = raw[10:10 + header_len]
    assert header == b'{"a": 1}'
    payload_len = int.from_bytes(raw[10 + header_len:18 + header_len], "little")
    assert payload_len == 2
    assert raw[18 + header_len:] == b"\x01\x02"


def test_bad_magic():
    buf = io.BytesIO(b"NOPE" + bytes(20))
    with pytest.raises(ProtocolError):
        wire.read_frame(buf)


def test_bad_version():
    buf = io.BytesIO()
    wire.write_frame(buf, wire.MSG_HELLO, {})
    raw = bytearray(buf.getvalue())
    raw[4] = 9
    with pytest.raises(ProtocolError):
        wire.read_frame(io.BytesIO(bytes(raw)))


def test_truncated_header_and_payload():
    buf = io.BytesIO()
    wire.write_frame(buf, wire.MSG_HELLO, {"k": "v"}, b"payload")
    raw = buf.getvalue()
    for cut in (3, 8, len(raw) - 3):
        with pytest.raises(ProtocolError):
            wire.read_frame(io.BytesIO(raw[:cut]))


def test_non_json_header():
    prefix = wire.MAGIC + bytes([wire.VERSION, wire.MSG_HELLO]) + (3).to_bytes(4, "little")
    blob = prefix + b"???" + (0).to_bytes(8, "little")
    with pytest.raises(ProtocolError):
        wire.read_frame(io.BytesIO(blob))


def test_tensor_codec():
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((2, 3, 4, 5)).astype(np.float32)
    blob = wire.encode_tensor(arr)
    assert len(blob) == arr.size * 4
    back = wire.decode_tensor(blob, arr.shape)
    assert np.array_equal(back, arr)
    with pytest.raises(ProtocolError):
        wire.decode_tensor(blob[:-4], arr.shape)


def test_request_payload_layout():
    rng = np.random.default_rng(1)
    latents = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
    depths = rng.standard_normal((2, 4, 4)).astype(np.float32)
    payload = wire.encode_request_payload(latents, depths)
    # latent frames first, then depth frames, frame-major C-order
    assert payload[:latents.nbytes] == latents.tobytes()
    assert payload[latents.nbytes:] == depths.tobytes()
    lat2, dep2 = wire.decode_request_payload(payload, 2, 3, 4, 4)
    assert np.array_equal(lat2, latents)
    assert np.array_equal(dep2, depths)
    with pytest.raises(ProtocolError):
        wire.decode_request_payload(payload[:-1], 2, 3, 4, 4)
