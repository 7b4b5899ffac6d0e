"""VQA microservice: POST /vqa answers a question about one image.

Two modes. ``stub`` serves deterministic answers from an ordered pattern
fixture (first substring match wins, otherwise "do not know") and is the test
double for the captioning engine. ``model`` hosts a real image-conditioned QA
model, loaded lazily in the background; /healthz reports 503 until the weights
are ready, and inference is serialized through a single worker lock.
"""

from __future__ import annotations

import argparse
import base64
import binascii
import json
import logging
import sys
import threading
from dataclasses import dataclass
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Callable, Sequence

log = logging.getLogger("answerer_service")

DEFAULT_MAX_IMAGE_BYTES = 8_000_000
DEFAULT_MODEL_ID = "Salesforce/blip2-flan-t5-xxl"
NO_ANSWER = "do not know"

# magic-byte prefixes for the image formats the engine may ship
_IMAGE_MAGIC = (
    b"\x89PNG\r\n\x1a\n",
    b"\xff\xd8\xff",        # JPEG
    b"GIF87a",
    b"GIF89a",
    b"BM",                  # BMP
    b"II*\x00",             # TIFF little-endian
    b"MM\x00*",             # TIFF big-endian
)


class ServiceConfigError(Exception):
    pass


@dataclass
class ServiceConfig:
    host: str = "127.0.0.1"
    port: int = 8099
    mode: str = "stub"
    model_id: str = DEFAULT_MODEL_ID
    fixture_path: str | None = None
    max_image_bytes: int = DEFAULT_MAX_IMAGE_BYTES

    def validate(self) -> None:
        if self.mode not in ("stub", "model"):
            raise ServiceConfigError(f"unknown mode: {self.mode!r}")
        if self.mode == "stub" and not self.fixture_path:
            raise ServiceConfigError("stub mode requires a fixture file")
        if self.max_image_bytes < 1:
            raise ServiceConfigError("max_image_bytes must be >= 1")


def looks_like_image(data: bytes) -> bool:
    if data.startswith(b"RIFF") and data[8:12] == b"WEBP":
        return True
    return any(data.startswith(magic) for magic in _IMAGE_MAGIC)


def load_fixture(path: str | Path) -> list[tuple[str, str]]:
    """Ordered (pattern, answer) rules from a JSON array file."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ServiceConfigError(f"cannot read fixture {path}: {exc}") from exc
    if not isinstance(payload, list):
        raise ServiceConfigError(f"fixture {path} must hold a JSON array")
    rules = []
    for entry in payload:
        if not isinstance(entry, dict) or "pattern" not in entry or "answer" not in entry:
            raise ServiceConfigError(
                f"fixture entries need pattern/answer fields, got {entry!r}"
            )
        rules.append((str(entry["pattern"]), str(entry["answer"])))
    return rules


class StubAnswerer:
    """First-match ordered substring rules over the incoming prompt."""

    def __init__(self, rules: Sequence[tuple[str, str]]):
        self.rules = list(rules)

    def ready(self) -> bool:
        return True

    def answer(self, image_bytes: bytes, prompt: str) -> str:
        for pattern, answer in self.rules:
            if pattern in prompt:
                return answer
        return NO_ANSWER


class ModelAnswerer:
    """Lazy-loading wrapper around a hosted model.

    ``loader`` returns an object with ``answer(image_bytes, prompt) -> str``.
    Loading happens on a background thread; until it finishes (or if it fails)
    the service stays not-ready. Inference is serialized through one lock.
    """

    def __init__(self, loader: Callable[[], object]):
        self._loader = loader
        self._model: object | None = None
        self._error: Exception | None = None
        self._lock = threading.Lock()
        self._thread: threading.Thread | None = None

    def start(self) -> "ModelAnswerer":
        self._thread = threading.Thread(target=self._load, daemon=True)
        self._thread.start()
        return self

    def _load(self) -> None:
        try:
            model = self._loader()
        except Exception as exc:  # stay unready; surface via /healthz
            log.error("model load failed: %s", exc)
            self._error = exc
            return
        self._model = model
        log.info("model loaded; service ready")

    def ready(self) -> bool:
        return self._model is not None

    def answer(self, image_bytes: bytes, prompt: str) -> str:
        if self._model is None:
            raise RuntimeError("model not loaded")
        with self._lock:
            return self._model.answer(image_bytes, prompt)


def default_model_loader(model_id: str) -> Callable[[], object]:
    """Loader for a BLIP-2-class checkpoint via transformers (optional extra)."""

    def load() -> object:
        import io

        import torch  # noqa: F401  (device selection below)
        from PIL import Image
        from transformers import AutoProcessor, Blip2ForConditionalGeneration

        processor = AutoProcessor.from_pretrained(model_id)
        model = Blip2ForConditionalGeneration.from_pretrained(model_id)
        model.eval()

        class Loaded:
            def answer(self, image_bytes: bytes, prompt: str) -> str:
                image = Image.open(io.BytesIO(image_bytes)).convert("RGB")
                inputs = processor(images=image, text=prompt, return_tensors="pt")
                with torch.no_grad():
                    output = model.generate(**inputs, max_new_tokens=64, num_beams=5)
                return processor.batch_decode(output, skip_special_tokens=True)[0].strip()

        return Loaded()

    return load


def make_server(config: ServiceConfig, answerer) -> ThreadingHTTPServer:
    max_image_bytes = config.max_image_bytes

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            log.debug("%s", args)

        def _reply(self, status: int, payload: dict) -> None:
            body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def do_GET(self):
            if self.path != "/healthz":
                self._reply(404, {"error": "not found"})
            elif answerer.ready():
                self._reply(200, {"status": "ok"})
            else:
                self._reply(503, {"status": "unavailable"})

        def do_POST(self):
            if self.path != "/vqa":
                self._reply(404, {"error": "not found"})
                return
            length = int(self.headers.get("Content-Length", "0"))
            try:
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                self._reply(400, {"error": "request body is not valid JSON"})
                return
            prompt = payload.get("prompt")
            if not isinstance(prompt, str) or not prompt.strip():
                self._reply(400, {"error": "prompt must be a non-empty string"})
                return
            image_b64 = payload.get("image_b64")
            if not isinstance(image_b64, str):
                self._reply(400, {"error": "image_b64 must be a base64 string"})
                return
            try:
                image_bytes = base64.b64decode(image_b64, validate=True)
            except (binascii.Error, ValueError):
                self._reply(400, {"error": "image_b64 is not valid base64"})
                return
            if len(image_bytes) > max_image_bytes:
                self._reply(
                    400,
                    {"error": f"image exceeds {max_image_bytes} bytes"},
                )
                return
            if not looks_like_image(image_bytes):
                self._reply(400, {"error": "payload does not decode to a known image format"})
                return
            if not answerer.ready():
                self._reply(503, {"error": "model not loaded"})
                return
            try:
                answer = answerer.answer(image_bytes, prompt)
            except Exception as exc:
                log.error("inference failed: %s", exc)
                self._reply(500, {"error": "inference failed"})
                return
            self._reply(200, {"answer": answer})

    return ThreadingHTTPServer((config.host, config.port), Handler)


def build_answerer(config: ServiceConfig):
    if config.mode == "stub":
        return StubAnswerer(load_fixture(config.fixture_path))
    return ModelAnswerer(default_model_loader(config.model_id)).start()


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="answerer-service",
        description="Serve the /vqa + /healthz answerer wire contract.",
    )
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8099)
    parser.add_argument("--mode", choices=("stub", "model"), default="stub")
    parser.add_argument("--fixture", dest="fixture_path",
                        help="JSON pattern/answer rules (stub mode)")
    parser.add_argument("--model-id", dest="model_id", default=DEFAULT_MODEL_ID)
    parser.add_argument("--max-image-bytes", dest="max_image_bytes",
                        type=int, default=DEFAULT_MAX_IMAGE_BYTES)
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    config = ServiceConfig(
        host=args.host,
        port=args.port,
        mode=args.mode,
        model_id=args.model_id,
        fixture_path=args.fixture_path,
        max_image_bytes=args.max_image_bytes,
    )
    try:
        config.validate()
        answerer = build_answerer(config)
        server = make_server(config, answerer)
    except ServiceConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    host, port = server.server_address
    log.info("serving %s mode on http://%s:%d", config.mode, host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


if __name__ == "__main__":
    sys.exit(main())
