"""Length-prefixed JSON framing and image payloads, protocol version 1.

Every message is a 4-byte big-endian unsigned length followed by a UTF-8
JSON object. Images travel as ``{"w", "h", "rgb"}`` with base64 row-major
8-bit RGB bytes. Two error layers: `ProtocolError` means the byte stream
itself can no longer be trusted (the connection must close), `RequestError`
means one message was bad but framing is intact (reply with an error and
keep serving).
"""

from __future__ import annotations

import base64
import binascii
import json
import struct
from typing import Callable

import numpy as np

PROTO_VERSION = 1
MAX_MESSAGE_BYTES = 64 * 1024 * 1024

_LEN = struct.Struct(">I")


class ProtocolError(Exception):
    """Stream-level corruption; the connection cannot continue."""


class RequestError(Exception):
    """One bad message; the connection stays open."""

    def __init__(self, message: str, request_id: int | None = None) -> None:
        super().__init__(message)
        self.request_id = request_id


def encode_frame(obj: dict) -> bytes:
    body = json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return _LEN.pack(len(body)) + body


def read_exact(read: Callable[[int], bytes], n: int) -> bytes | None:
    """Read exactly n bytes; None on clean EOF before the first byte."""
    buf = b""
    while len(buf) < n:
        chunk = read(n - len(buf))
        if not chunk:
            if not buf:
                return None
            raise ProtocolError(f"stream ended mid-frame ({len(buf)}/{n} bytes)")
        buf += chunk
    return buf


def read_frame(read: Callable[[int], bytes]) -> dict | None:
    """Read one framed message; None on clean EOF between frames."""
    head = read_exact(read, 4)
    if head is None:
        return None
    (length,) = _LEN.unpack(head)
    if length > MAX_MESSAGE_BYTES:
        raise ProtocolError(f"oversized frame ({length} bytes)")
    body = read_exact(read, length)
    if body is None:
        raise ProtocolError("stream ended before frame body")
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise RequestError(f"undecodable message body: {exc}") from exc
    if not isinstance(obj, dict):
        raise RequestError("message body is not a JSON object")
    return obj


def decode_image(value: object, field: str) -> np.ndarray:
    """Validate and decode one image payload to an (h, w, 3) uint8 array."""
    if not isinstance(value, dict):
        raise RequestError(f"{field} is not an image object")
    w, h = value.get("w"), value.get("h")
    if not isinstance(w, int) or isinstance(w, bool) or w < 1:
        raise RequestError(f"{field} width must be a positive integer")
    if not isinstance(h, int) or isinstance(h, bool) or h < 1:
        raise RequestError(f"{field} height must be a positive integer")
    rgb = value.get("rgb")
    if not isinstance(rgb, str):
        raise RequestError(f"{field} is missing base64 pixel data")
    try:
        raw = base64.b64decode(rgb, validate=True)
    except (binascii.Error, ValueError) as exc:
        raise RequestError(f"{field} pixel data is not valid base64") from exc
    if len(raw) != w * h * 3:
        raise RequestError(
            f"{field} pixel data holds {len(raw)} bytes, expected {w * h * 3}"
        )
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3)
