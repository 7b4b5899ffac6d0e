"""Backend clients: chat-completion questioner, VQA answerer, scripted doubles.

The engine only sees two small interfaces:

* questioner: ``ask(messages) -> str``, ``summarize(messages) -> str``, ``describe() -> str``
* answerer:   ``answer(image_path, prompt) -> str``, ``describe() -> str``

Live clients speak the HTTP wire contracts below; scripted backends replay
canned responses in order and record what they were called with.
"""

from __future__ import annotations

import base64
import json
import logging
import time
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import ConfigError, ProtocolError, ScriptExhausted, TransportError
from .prompts import ChatMessage

log = logging.getLogger("chatcap.backends")

CHAT_COMPLETIONS_PATH = "/v1/chat/completions"
VQA_PATH = "/vqa"
HEALTH_PATH = "/healthz"

# Transient statuses worth retrying; everything else fails fast.
_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}
_MAX_RETRIES = 2


def _check_endpoint(base_url: str, timeout: float) -> None:
    if not (base_url.startswith("http://") or base_url.startswith("https://")):
        raise ConfigError(f"base_url must be absolute, got {base_url!r}")
    if timeout <= 0:
        raise ConfigError(f"timeout must be > 0, got {timeout}")


@dataclass
class ChatEndpoint:
    base_url: str
    model_name: str = "gpt-3.5-turbo"
    api_key: str = field(default="", repr=False)
    timeout: float = 60.0
    temperature: float = 0.6
    max_tokens: int = 128
    retry_base_delay: float = 0.5

    def __post_init__(self) -> None:
        self.base_url = self.base_url.rstrip("/")
        _check_endpoint(self.base_url, self.timeout)


@dataclass
class VqaEndpoint:
    base_url: str
    timeout: float = 60.0

    def __post_init__(self) -> None:
        self.base_url = self.base_url.rstrip("/")
        _check_endpoint(self.base_url, self.timeout)


def _post_json(url: str, body: bytes, headers: dict[str, str], timeout: float) -> str:
    request = urllib.request.Request(url, data=body, headers=headers, method="POST")
    with urllib.request.urlopen(request, timeout=timeout) as response:
        return response.read().decode("utf-8")


def chat_complete(
    endpoint: ChatEndpoint,
    messages: Sequence[ChatMessage],
    *,
    max_tokens: int | None = None,
) -> str:
    """POST the message list to the chat-completions endpoint, with retries.

    Transient failures (connection errors, timeouts, 429/5xx) are retried up
    to twice with exponential backoff; anything else surfaces immediately.
    """
    if not messages:
        raise ConfigError("chat_complete requires a non-empty message list")
    # Fixed key order keeps request bodies byte-stable for record/replay.
    body = json.dumps(
        {
            "model": endpoint.model_name,
            "messages": [{"role": m.role, "content": m.content} for m in messages],
            "temperature": endpoint.temperature,
            "max_tokens": endpoint.max_tokens if max_tokens is None else max_tokens,
        },
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
    headers = {"Content-Type": "application/json"}
    if endpoint.api_key:
        headers["Authorization"] = f"Bearer {endpoint.api_key}"
    url = endpoint.base_url + CHAT_COMPLETIONS_PATH

    last_error: Exception | None = None
    for attempt in range(_MAX_RETRIES + 1):
        try:
            raw = _post_json(url, body, headers, endpoint.timeout)
            return _extract_chat_content(raw)
        except urllib.error.HTTPError as exc:
            detail = exc.read().decode("utf-8", "replace")
            if exc.code not in _RETRYABLE_STATUSES:
                raise TransportError(
                    f"chat endpoint returned {exc.code}: {detail}"
                ) from exc
            last_error = TransportError(f"chat endpoint returned {exc.code}: {detail}")
        except urllib.error.URLError as exc:
            last_error = TransportError(f"chat endpoint unreachable: {exc.reason}")
        except TimeoutError as exc:
            last_error = TransportError("chat endpoint timed out")
        if attempt < _MAX_RETRIES:
            delay = endpoint.retry_base_delay * (2**attempt)
            log.warning(
                "chat request failed (%s); retry %d/%d in %.2fs",
                last_error,
                attempt + 1,
                _MAX_RETRIES,
                delay,
            )
            time.sleep(delay)
    assert last_error is not None
    raise last_error


def _extract_chat_content(raw: str) -> str:
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"chat response is not valid JSON: {raw[:200]!r}") from exc
    choices = payload.get("choices")
    if not isinstance(choices, list) or not choices:
        raise ProtocolError(f"chat response has no choices: {raw[:200]!r}")
    try:
        content = choices[0]["message"]["content"]
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"chat response missing message content: {raw[:200]!r}") from exc
    if not isinstance(content, str):
        raise ProtocolError("chat response content is not a string")
    return content


def vqa_answer(endpoint: VqaEndpoint, image_path: str | Path, prompt: str) -> str:
    """Send one frame image plus the rendered prompt; return the trimmed answer."""
    if not prompt:
        raise ConfigError("vqa_answer requires a non-empty prompt")
    image_bytes = Path(image_path).read_bytes()  # local I/O error before any network use
    body = json.dumps(
        {
            "image_b64": base64.b64encode(image_bytes).decode("ascii"),
            "prompt": prompt,
        },
        ensure_ascii=False,
        separators=(",", ":"),
    ).encode("utf-8")
    url = endpoint.base_url + VQA_PATH
    try:
        raw = _post_json(url, body, {"Content-Type": "application/json"}, endpoint.timeout)
    except urllib.error.HTTPError as exc:
        detail = exc.read().decode("utf-8", "replace")
        raise TransportError(f"vqa endpoint returned {exc.code}: {detail}") from exc
    except urllib.error.URLError as exc:
        raise TransportError(f"vqa endpoint unreachable: {exc.reason}") from exc
    except TimeoutError as exc:
        raise TransportError("vqa endpoint timed out") from exc
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"vqa response is not valid JSON: {raw[:200]!r}") from exc
    answer = payload.get("answer")
    if not isinstance(answer, str):
        raise ProtocolError(f"vqa response missing answer field: {raw[:200]!r}")
    return answer.strip()


def vqa_healthy(endpoint: VqaEndpoint) -> bool:
    try:
        with urllib.request.urlopen(
            endpoint.base_url + HEALTH_PATH, timeout=endpoint.timeout
        ) as response:
            payload = json.loads(response.read().decode("utf-8"))
        return payload.get("status") == "ok"
    except (urllib.error.URLError, TimeoutError, json.JSONDecodeError):
        return False


class ChatBackend:
    """Live questioner/summarizer over one chat-completions endpoint."""

    def __init__(self, endpoint: ChatEndpoint, summary_max_tokens: int = 256):
        self.endpoint = endpoint
        self.summary_max_tokens = summary_max_tokens

    def ask(self, messages: Sequence[ChatMessage]) -> str:
        return chat_complete(self.endpoint, messages)

    def summarize(self, messages: Sequence[ChatMessage]) -> str:
        return chat_complete(self.endpoint, messages, max_tokens=self.summary_max_tokens)

    def describe(self) -> str:
        return f"chat:{self.endpoint.model_name}@{self.endpoint.base_url}"


class VqaBackend:
    """Live answerer over one VQA endpoint."""

    def __init__(self, endpoint: VqaEndpoint):
        self.endpoint = endpoint

    def answer(self, image_path: str | Path, prompt: str) -> str:
        return vqa_answer(self.endpoint, image_path, prompt)

    def describe(self) -> str:
        return f"vqa@{self.endpoint.base_url}"


class ScriptStream:
    """Ordered canned responses; each call consumes exactly one."""

    def __init__(self, name: str, responses: Sequence[str]):
        self.name = name
        self.responses = list(responses)
        self.cursor = 0
        self.calls: list[object] = []

    def next(self, received: object) -> str:
        self.calls.append(received)
        if self.cursor >= len(self.responses):
            raise ScriptExhausted(
                f"scripted {self.name} stream exhausted at call #{self.cursor + 1} "
                f"(only {len(self.responses)} responses provided)"
            )
        response = self.responses[self.cursor]
        self.cursor += 1
        return response

    @property
    def remaining(self) -> int:
        return len(self.responses) - self.cursor


class ScriptedQuestioner:
    """Deterministic questioner: question rounds and summary requests are
    separate streams, mirroring the script file layout."""

    def __init__(self, questions: Sequence[str], summaries: Sequence[str]):
        self.questions = ScriptStream("questioner", questions)
        self.summaries = ScriptStream("summary", summaries)

    def ask(self, messages: Sequence[ChatMessage]) -> str:
        return self.questions.next(list(messages))

    def summarize(self, messages: Sequence[ChatMessage]) -> str:
        return self.summaries.next(list(messages))

    def describe(self) -> str:
        return "scripted"


class ScriptedAnswerer:
    def __init__(self, answers: Sequence[str]):
        self.answers = ScriptStream("answerer", answers)

    def answer(self, image_path: str | Path, prompt: str) -> str:
        return self.answers.next((str(image_path), prompt))

    def describe(self) -> str:
        return "scripted"


class RecordingQuestioner:
    """Pass-through wrapper that captures live responses into a script dict."""

    def __init__(self, inner, script: dict[str, list[str]]):
        self.inner = inner
        self.script = script

    def ask(self, messages: Sequence[ChatMessage]) -> str:
        response = self.inner.ask(messages)
        self.script["questioner"].append(response)
        return response

    def summarize(self, messages: Sequence[ChatMessage]) -> str:
        response = self.inner.summarize(messages)
        self.script["summary"].append(response)
        return response

    def describe(self) -> str:
        return self.inner.describe()


class RecordingAnswerer:
    def __init__(self, inner, script: dict[str, list[str]]):
        self.inner = inner
        self.script = script

    def answer(self, image_path: str | Path, prompt: str) -> str:
        response = self.inner.answer(image_path, prompt)
        self.script["answerer"].append(response)
        return response

    def describe(self) -> str:
        return self.inner.describe()


def new_script() -> dict[str, list[str]]:
    return {"questioner": [], "answerer": [], "summary": []}


def load_script(path: str | Path) -> dict[str, list[str]]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read script file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"script file {path} must hold a JSON object")
    script = new_script()
    for key in script:
        values = payload.get(key, [])
        if not isinstance(values, list) or any(not isinstance(v, str) for v in values):
            raise ConfigError(f"script key {key!r} must be a list of strings")
        script[key] = values
    return script


def save_script(path: str | Path, script: dict[str, list[str]]) -> None:
    ordered = {key: script.get(key, []) for key in ("questioner", "answerer", "summary")}
    Path(path).write_text(
        json.dumps(ordered, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
