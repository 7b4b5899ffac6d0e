"""Test helpers: tiny PNG frames, scripted backends, wire stub server."""

from __future__ import annotations

import json
import struct
import threading
import zlib
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from chatcap.backends import ScriptedAnswerer, ScriptedQuestioner
from chatcap.engine import Transcript, Turn


def _png_chunk(tag: bytes, data: bytes) -> bytes:
    return struct.pack(">I", len(data)) + tag + data + struct.pack(">I", zlib.crc32(tag + data))


def tiny_png(shade: int = 0) -> bytes:
    """A valid 1x1 grayscale PNG; shade varies the pixel byte."""
    return (
        b"\x89PNG\r\n\x1a\n"
        + _png_chunk(b"IHDR", struct.pack(">IIBBBBB", 1, 1, 8, 0, 0, 0, 0))
        + _png_chunk(b"IDAT", zlib.compress(bytes([0, shade % 256])))
        + _png_chunk(b"IEND", b"")
    )


def write_frames(directory: Path, count: int) -> Path:
    directory.mkdir(parents=True, exist_ok=True)
    for i in range(count):
        (directory / f"frame_{i:03d}.png").write_bytes(tiny_png(i))
    return directory


def scripted_pair(questions, answers, summaries):
    return ScriptedQuestioner(questions, summaries), ScriptedAnswerer(answers)


def make_turn(
    round_no: int,
    question: str,
    frame_id: int = 1,
    answer: str = "an answer",
    retries: int = 0,
    repaired: bool = False,
) -> Turn:
    return Turn(
        round=round_no,
        raw_question=f"Frame_{frame_id}: {question}",
        frame_id=frame_id,
        question_text=question,
        answer=answer,
        retries=retries,
        repaired=repaired,
    )


def make_transcript(questions, video_id="synthetic", aborted=False) -> Transcript:
    """Transcript whose round 1 is the fixed question and rounds 2.. are `questions`."""
    turns = [make_turn(1, "Describe it in details.")]
    turns += [make_turn(r, q) for r, q in enumerate(questions, start=2)]
    return Transcript(
        schema_version=1,
        video_id=video_id,
        config={},
        frames=[],
        turns=turns,
        summary="a summary",
        aborted=aborted,
        ablation=None,
        metrics={},
    )


class WireStub:
    """In-process HTTP server speaking both wire contracts.

    Responses are queues of (status, payload) consumed one per request;
    every request is logged as (path, body_bytes).
    """

    def __init__(self):
        self.chat_responses: list[tuple[int, object]] = []
        self.vqa_responses: list[tuple[int, object]] = []
        self.requests: list[tuple[str, bytes]] = []
        self._server: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    def start(self) -> str:
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):  # keep test output quiet
                pass

            def _reply(self, status: int, payload: object) -> None:
                body = (
                    payload.encode("utf-8")
                    if isinstance(payload, str)
                    else json.dumps(payload).encode("utf-8")
                )
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(body)))
                self.end_headers()
                self.wfile.write(body)

            def do_GET(self):
                if self.path == "/healthz":
                    self._reply(200, {"status": "ok"})
                else:
                    self._reply(404, {"error": "not found"})

            def do_POST(self):
                length = int(self.headers.get("Content-Length", "0"))
                body = self.rfile.read(length)
                stub.requests.append((self.path, body))
                if self.path == "/v1/chat/completions":
                    queue = stub.chat_responses
                elif self.path == "/vqa":
                    queue = stub.vqa_responses
                else:
                    self._reply(404, {"error": "not found"})
                    return
                if not queue:
                    self._reply(500, {"error": "stub exhausted"})
                    return
                status, payload = queue.pop(0)
                self._reply(status, payload)

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self._thread = threading.Thread(
            target=lambda: self._server.serve_forever(poll_interval=0.02), daemon=True
        )
        self._thread.start()
        host, port = self._server.server_address
        return f"http://{host}:{port}"

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()

    @staticmethod
    def chat_ok(content: str) -> tuple[int, dict]:
        return 200, {"choices": [{"message": {"role": "assistant", "content": content}}]}

    @staticmethod
    def vqa_ok(answer: str) -> tuple[int, dict]:
        return 200, {"answer": answer}
