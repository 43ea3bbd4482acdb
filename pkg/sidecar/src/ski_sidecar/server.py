"""Connection handling: handshake, request loop, error replies.

Each connection is served by one sequential loop, so exactly one request is
ever in flight per connection; a TCP server runs one thread per connection
so separate clients proceed concurrently. Bad messages get an error reply
``{"id": ..., "error": "..."}`` and the connection stays open; only
stream-level corruption (truncated or oversized frames) closes it.
"""

from __future__ import annotations

import socket
import sys
import threading
from typing import Callable

from .protocol import (
    PROTO_VERSION,
    ProtocolError,
    RequestError,
    decode_image,
    encode_frame,
    read_frame,
)

IMAGE_FIELDS = ("init_template", "dyn_template", "search")


def _parse_request(msg: dict) -> tuple[int, list]:
    request_id = msg.get("id")
    if not isinstance(request_id, int) or isinstance(request_id, bool):
        raise RequestError("request id must be an integer")
    images = []
    for name in IMAGE_FIELDS:
        if name not in msg:
            raise RequestError(f"request is missing {name}", request_id)
        try:
            images.append(decode_image(msg[name], name))
        except RequestError as exc:
            # decode_image cannot know the id; the error reply still should
            raise RequestError(str(exc), request_id) from exc
    return request_id, images


def handle_connection(
    read: Callable[[int], bytes], write: Callable[[bytes], None], localizer
) -> None:
    """Serve one connection until EOF or stream corruption."""

    def send(obj: dict) -> None:
        write(encode_frame(obj))

    def send_error(request_id: int | None, message: str) -> None:
        send({"id": request_id, "error": message})

    ready = False
    while True:
        try:
            msg = read_frame(read)
        except RequestError as exc:
            send_error(exc.request_id, str(exc))
            continue
        except ProtocolError:
            return
        if msg is None:
            return

        if not ready:
            if msg.get("proto") != PROTO_VERSION:
                send_error(None, "unsupported protocol")
                continue
            if msg.get("role") != "client":
                send_error(None, "handshake role must be 'client'")
                continue
            send({"proto": PROTO_VERSION, "role": "localizer", "name": localizer.name})
            ready = True
            continue

        try:
            request_id, images = _parse_request(msg)
        except RequestError as exc:
            send_error(exc.request_id, str(exc))
            continue
        try:
            bbox, score = localizer.localize(*images)
        except RequestError as exc:
            # the id is known by now, so the error reply can carry it
            send_error(request_id, str(exc))
            continue
        send({"id": request_id, "bbox": [float(v) for v in bbox], "score": float(score)})


def serve_stdio(localizer) -> int:
    """Serve a single connection over stdin/stdout; returns at EOF."""
    stdin = sys.stdin.buffer
    stdout = sys.stdout.buffer

    def write(data: bytes) -> None:
        stdout.write(data)
        stdout.flush()

    handle_connection(stdin.read, write, localizer)
    return 0


class TcpServer:
    """Threaded accept loop; one daemon thread per connection."""

    def __init__(self, host: str, port: int, localizer) -> None:
        self._localizer = localizer
        self._sock = socket.create_server((host, port))
        self._closed = threading.Event()

    @property
    def address(self) -> tuple[str, int]:
        return self._sock.getsockname()[:2]

    def _serve_client(self, conn: socket.socket) -> None:
        with conn:
            try:
                handle_connection(conn.recv, conn.sendall, self._localizer)
            except OSError:
                pass  # client went away mid-write

    def serve_forever(self) -> None:
        while not self._closed.is_set():
            try:
                conn, _ = self._sock.accept()
            except OSError:
                return  # socket closed by shutdown()
            threading.Thread(
                target=self._serve_client, args=(conn,), daemon=True
            ).start()

    def shutdown(self) -> None:
        self._closed.set()
        self._sock.close()
