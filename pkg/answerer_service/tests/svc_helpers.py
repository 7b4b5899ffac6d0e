"""Self-contained test helpers for the answerer service (stdlib only)."""

from __future__ import annotations

import base64
import json
import struct
import threading
import urllib.error
import urllib.request
import zlib
from pathlib import Path

from answerer_service.service import ServiceConfig, make_server


def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data))


def tiny_png(shade: int = 0) -> bytes:
    return (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", struct.pack(">IIBBBBB", 1, 1, 8, 0, 0, 0, 0))
        + _png_chunk(b"IDAT", zlib.compress(bytes([0, shade % 256])))
        + _png_chunk(b"IEND", b"")
    )


def png_b64(shade: int = 0) -> str:
    return base64.b64encode(tiny_png(shade)).decode("ascii")


DEFAULT_RULES = [
    {"pattern": "color", "answer": "blue"},
    {"pattern": "doing", "answer": "running across the yard"},
]


def write_fixture(path: Path, rules=None) -> Path:
    path.write_text(json.dumps(rules if rules is not None else DEFAULT_RULES), encoding="utf-8")
    return path


class RunningService:
    def __init__(self, server):
        self.server = server
        host, port = server.server_address
        self.base_url = f"http://{host}:{port}"
        self._thread = threading.Thread(
            target=lambda: server.serve_forever(poll_interval=0.02), daemon=True
        )
        self._thread.start()

    def stop(self):
        self.server.shutdown()
        self.server.server_close()

    def get(self, path: str) -> tuple[int, dict]:
        try:
            with urllib.request.urlopen(self.base_url + path, timeout=5) as response:
                return response.status, json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            return exc.code, json.loads(exc.read().decode("utf-8"))

    def post(self, path: str, payload: dict | bytes) -> tuple[int, dict]:
        body = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
        request = urllib.request.Request(
            self.base_url + path,
            data=body,
            headers={"Content-Type": "application/json"},
            method="POST",
        )
        try:
            with urllib.request.urlopen(request, timeout=5) as response:
                return response.status, json.loads(response.read().decode("utf-8"))
        except urllib.error.HTTPError as exc:
            return exc.code, json.loads(exc.read().decode("utf-8"))


def start_service(answerer, max_image_bytes: int = 8_000_000) -> RunningService:
    config = ServiceConfig(port=0, mode="stub", fixture_path="unused",
                           max_image_bytes=max_image_bytes)
    return RunningService(make_server(config, answerer))
