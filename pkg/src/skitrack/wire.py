"""Wire protocol v1 client for an external localizer process.

Framing: each message is a 4-byte big-endian unsigned length followed by a
UTF-8 JSON body, over a TCP socket or a child process's stdio. The client
sends ``{"proto": 1, "role": "client"}`` once, then one request per
localization: ``{"id", "init_template", "dyn_template", "search"}`` where
every image is ``{"w", "h", "rgb"}`` with base64 row-major 8-bit RGB,
out-of-frame area zero-padded and bilinear-resized. Replies carry
``{"id", "bbox": [cx, cy, w, h] normalized to [0, 1], "score"}``.
"""

from __future__ import annotations

import base64
import json
import math
import os
import selectors
import socket
import struct
import subprocess
from typing import TYPE_CHECKING, Any, Sequence

import cv2
import numpy as np

from .geometry import BBox, CropSpec
from .localizer import Localizer, LocalizerResult, LocalizerUnavailable, ProtocolViolation

if TYPE_CHECKING:
    from .tracker import TemplateRef

PROTO_VERSION = 1
DEFAULT_TIMEOUT = 10.0
MAX_MESSAGE_BYTES = 64 * 1024 * 1024

_LEN = struct.Struct(">I")


def encode_message(obj: dict) -> bytes:
    """Frame a JSON-serializable object as length-prefixed bytes."""
    body = json.dumps(obj, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    return _LEN.pack(len(body)) + body


def decode_body(body: bytes) -> dict:
    try:
        obj = json.loads(body.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolViolation(f"protocol violation: undecodable message body ({exc})") from exc
    if not isinstance(obj, dict):
        raise ProtocolViolation("protocol violation: message body is not a JSON object")
    return obj


def crop_image(frame: np.ndarray, crop: CropSpec) -> np.ndarray:
    """Rasterize a crop square from an RGB frame array.

    Out-of-frame area is zero-padded; the patch is bilinear-resized to
    (out_size, out_size). Bounds are rounded to whole pixels, interior
    geometry stays defined by the CropSpec floats.
    """
    if not isinstance(frame, np.ndarray) or frame.ndim != 3 or frame.shape[2] != 3:
        raise TypeError("external backend frames must be HxWx3 arrays")
    side = max(1, int(round(crop.side)))
    x1 = int(round(crop.center_x - crop.side / 2))
    y1 = int(round(crop.center_y - crop.side / 2))
    patch = np.zeros((side, side, 3), dtype=np.uint8)
    h, w = frame.shape[:2]
    sx1, sy1 = max(x1, 0), max(y1, 0)
    sx2, sy2 = min(x1 + side, w), min(y1 + side, h)
    if sx2 > sx1 and sy2 > sy1:
        patch[sy1 - y1 : sy2 - y1, sx1 - x1 : sx2 - x1] = frame[sy1:sy2, sx1:sx2]
    return cv2.resize(patch, (crop.out_size, crop.out_size), interpolation=cv2.INTER_LINEAR)


def encode_image(image: np.ndarray) -> dict:
    h, w = image.shape[:2]
    rgb = base64.b64encode(np.ascontiguousarray(image, dtype=np.uint8).tobytes()).decode("ascii")
    return {"w": int(w), "h": int(h), "rgb": rgb}


class _SocketTransport:
    def __init__(self, sock: socket.socket, timeout: float) -> None:
        self._sock = sock
        self._sock.settimeout(timeout)

    def write(self, data: bytes) -> None:
        try:
            self._sock.sendall(data)
        except (OSError, socket.timeout) as exc:
            raise LocalizerUnavailable(f"localizer unavailable: send failed ({exc})") from exc

    def read_exact(self, n: int) -> bytes:
        chunks = []
        remaining = n
        while remaining > 0:
            try:
                chunk = self._sock.recv(remaining)
            except socket.timeout as exc:
                raise LocalizerUnavailable("localizer unavailable: reply timed out") from exc
            except OSError as exc:
                raise LocalizerUnavailable(f"localizer unavailable: recv failed ({exc})") from exc
            if not chunk:
                raise LocalizerUnavailable("localizer unavailable: connection closed")
            chunks.append(chunk)
            remaining -= len(chunk)
        return b"".join(chunks)

    def close(self) -> None:
        try:
            self._sock.close()
        except OSError:
            pass


class _PipeTransport:
    """Framed I/O over a child process's stdin/stdout."""

    def __init__(self, proc: subprocess.Popen, timeout: float) -> None:
        self._proc = proc
        self._timeout = timeout
        self._selector = selectors.DefaultSelector()
        self._selector.register(proc.stdout, selectors.EVENT_READ)

    def write(self, data: bytes) -> None:
        try:
            self._proc.stdin.write(data)
            self._proc.stdin.flush()
        except (OSError, ValueError, BrokenPipeError) as exc:
            raise LocalizerUnavailable(f"localizer unavailable: sidecar pipe broken ({exc})") from exc

    def read_exact(self, n: int) -> bytes:
        buf = b""
        while len(buf) < n:
            if not self._selector.select(self._timeout):
                raise LocalizerUnavailable("localizer unavailable: reply timed out")
            chunk = os.read(self._proc.stdout.fileno(), n - len(buf))
            if not chunk:
                raise LocalizerUnavailable("localizer unavailable: sidecar exited")
            buf += chunk
        return buf

    def close(self) -> None:
        self._selector.close()
        for stream in (self._proc.stdin, self._proc.stdout):
            try:
                stream.close()
            except OSError:
                pass
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            self._proc.kill()
            self._proc.wait()


class ExternalLocalizer(Localizer):
    """Protocol-v1 client backend; frames must be HxWx3 uint8 RGB arrays.

    One request is in flight per connection. Use one instance per sequence
    worker for parallel runs.
    """

    def __init__(self, transport, timeout: float = DEFAULT_TIMEOUT) -> None:
        self._transport = transport
        self._next_id = 1
        self.name = self._handshake()

    @classmethod
    def connect_tcp(cls, host: str, port: int, timeout: float = DEFAULT_TIMEOUT) -> "ExternalLocalizer":
        try:
            sock = socket.create_connection((host, port), timeout=timeout)
        except OSError as exc:
            raise LocalizerUnavailable(f"localizer unavailable: cannot connect to {host}:{port} ({exc})") from exc
        return cls(_SocketTransport(sock, timeout), timeout)

    @classmethod
    def spawn(cls, command: Sequence[str], timeout: float = DEFAULT_TIMEOUT) -> "ExternalLocalizer":
        try:
            proc = subprocess.Popen(
                list(command), stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as exc:
            raise LocalizerUnavailable(f"localizer unavailable: cannot spawn sidecar ({exc})") from exc
        return cls(_PipeTransport(proc, timeout), timeout)

    def close(self) -> None:
        self._transport.close()

    def __enter__(self) -> "ExternalLocalizer":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()

    # -- protocol ---------------------------------------------------------

    def _send(self, obj: dict) -> None:
        self._transport.write(encode_message(obj))

    def _recv(self) -> dict:
        (length,) = _LEN.unpack(self._transport.read_exact(4))
        if length > MAX_MESSAGE_BYTES:
            raise ProtocolViolation(f"protocol violation: oversized message ({length} bytes)")
        return decode_body(self._transport.read_exact(length))

    def _handshake(self) -> str:
        self._send({"proto": PROTO_VERSION, "role": "client"})
        reply = self._recv()
        if reply.get("proto") != PROTO_VERSION or reply.get("role") != "localizer":
            raise ProtocolViolation(f"protocol violation: bad handshake reply {reply!r}")
        return str(reply.get("name", ""))

    def extract_template(self, crop: CropSpec, frame: Any) -> dict:
        return encode_image(crop_image(frame, crop))

    def localize(
        self,
        initial_template: "TemplateRef",
        dynamic_template: "TemplateRef",
        search_crop: CropSpec,
        frame: Any,
    ) -> LocalizerResult:
        request_id = self._next_id
        self._next_id += 1
        self._send(
            {
                "id": request_id,
                "init_template": initial_template.payload,
                "dyn_template": dynamic_template.payload,
                "search": encode_image(crop_image(frame, search_crop)),
            }
        )
        reply = self._recv()
        return parse_reply(reply, request_id, search_crop.out_size)


def parse_reply(reply: dict, expected_id: int, out_size: int) -> LocalizerResult:
    """Validate a reply message and convert it to a LocalizerResult."""
    if "error" in reply:
        raise ProtocolViolation(f"protocol violation: sidecar error reply: {reply['error']}")
    if reply.get("id") != expected_id:
        raise ProtocolViolation(
            f"protocol violation: reply id {reply.get('id')!r} does not match request {expected_id}"
        )
    bbox = reply.get("bbox")
    score = reply.get("score")
    if not isinstance(bbox, list) or len(bbox) != 4:
        raise ProtocolViolation(f"protocol violation: malformed bbox {bbox!r}")
    try:
        cx, cy, w, h = (float(v) for v in bbox)
        score = float(score)
    except (TypeError, ValueError) as exc:
        raise ProtocolViolation(f"protocol violation: non-numeric reply fields") from exc
    if not all(math.isfinite(v) for v in (cx, cy, w, h)):
        raise ProtocolViolation(f"protocol violation: non-finite bbox {bbox!r}")
    if not math.isfinite(score) or not 0.0 <= score <= 1.0:
        raise ProtocolViolation(f"protocol violation: score {score!r} outside [0, 1]")
    if w < 0 or h < 0:
        raise ProtocolViolation(f"protocol violation: negative bbox dimensions {bbox!r}")
    local = BBox((cx - w / 2) * out_size, (cy - h / 2) * out_size, w * out_size, h * out_size)
    return LocalizerResult(local, score)
