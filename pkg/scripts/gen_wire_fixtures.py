#!/usr/bin/env python3
"""Regenerate the golden wire-protocol transcript under fixtures/wire_v1/.

requests.bin is a framed client byte stream (handshake plus six localize
requests with seeded random pixels and varied patch sizes); replies.bin is
the echo sidecar's byte-for-byte answer to it. Both components' conformance
tests replay these files, so regenerate them only when the protocol itself
changes, and commit the result.
"""

from __future__ import annotations

import base64
import json
import struct
import subprocess
import sys
from pathlib import Path

import numpy as np

SEED = 2026
# (request id, template side, search side); search side doubles as out_size
CASES = [
    (1, 32, 64),
    (2, 32, 64),
    (3, 16, 48),
    (4, 16, 32),
    (5, 32, 48),
    (6, 16, 64),
]


def frame(obj: dict) -> bytes:
    body = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    return struct.pack(">I", len(body)) + body


def image(rng: np.random.Generator, side: int) -> dict:
    raw = rng.integers(0, 256, size=side * side * 3, dtype=np.uint8).tobytes()
    return {"w": side, "h": side, "rgb": base64.b64encode(raw).decode("ascii")}


def build_requests() -> bytes:
    rng = np.random.default_rng(SEED)
    data = frame({"proto": 1, "role": "client"})
    for request_id, template_side, search_side in CASES:
        data += frame(
            {
                "id": request_id,
                "init_template": image(rng, template_side),
                "dyn_template": image(rng, template_side),
                "search": image(rng, search_side),
            }
        )
    return data


def main() -> int:
    out_dir = Path(__file__).resolve().parents[1] / "fixtures" / "wire_v1"
    out_dir.mkdir(parents=True, exist_ok=True)
    requests = build_requests()
    proc = subprocess.run(
        [sys.executable, "-m", "ski_sidecar", "--stdio", "--mode", "echo"],
        input=requests,
        capture_output=True,
        timeout=60,
    )
    if proc.returncode != 0:
        sys.stderr.write(proc.stderr.decode(errors="replace"))
        return 1
    (out_dir / "requests.bin").write_bytes(requests)
    (out_dir / "replies.bin").write_bytes(proc.stdout)
    print(f"wrote {out_dir / 'requests.bin'} ({len(requests)} bytes)")
    print(f"wrote {out_dir / 'replies.bin'} ({len(proc.stdout)} bytes)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
