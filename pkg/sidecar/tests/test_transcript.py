"""Golden transcript replay: recorded requests must reproduce recorded replies."""

import io
import json
import struct
import subprocess
import sys
from pathlib import Path

import pytest

FIXTURES = Path(__file__).resolve().parents[2] / "fixtures" / "wire_v1"


def _frames(data):
    read = io.BytesIO(data).read
    frames = []
    while True:
        head = read(4)
        if not head:
            return frames
        (length,) = struct.unpack(">I", head)
        frames.append(json.loads(read(length).decode("utf-8")))


@pytest.fixture(scope="module")
def transcript():
    requests = (FIXTURES / "requests.bin").read_bytes()
    replies = (FIXTURES / "replies.bin").read_bytes()
    return requests, replies


class TestGoldenTranscript:
    def test_recorded_request_stream_shape(self, transcript):
        requests, _ = transcript
        frames = _frames(requests)
        assert frames[0] == {"proto": 1, "role": "client"}
        assert [f["id"] for f in frames[1:]] == [1, 2, 3, 4, 5, 6]
        for f in frames[1:]:
            assert set(f) == {"id", "init_template", "dyn_template", "search"}

    def test_replay_is_byte_identical(self, transcript):
        requests, replies = transcript
        proc = subprocess.run(
            [sys.executable, "-m", "ski_sidecar", "--stdio", "--mode", "echo"],
            input=requests,
            capture_output=True,
            timeout=60,
        )
        assert proc.returncode == 0
        assert proc.stdout == replies  # byte-for-byte, not just equivalent JSON

    def test_recorded_replies_are_echo_constants(self, transcript):
        _, replies = transcript
        frames = _frames(replies)
        assert frames[0] == {"proto": 1, "role": "localizer", "name": "ski-sidecar-echo"}
        for request_id, reply in enumerate(frames[1:], start=1):
            assert reply == {
                "id": request_id,
                "bbox": [0.5, 0.5, 0.25, 0.25],
                "score": 0.9,
            }
