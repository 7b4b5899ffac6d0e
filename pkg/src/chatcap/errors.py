"""Shared exception types."""

from __future__ import annotations


class ChatCapError(Exception):
    """Base class for all chatcap errors."""


class ConfigError(ChatCapError):
    """Invalid configuration or precondition violation (CLI exit code 2)."""


class FrameIngestError(ChatCapError):
    """Frame sampling or extraction failed."""


class PromptError(ChatCapError):
    """Prompt pack is malformed or a render precondition was violated."""


class BackendError(ChatCapError):
    """Base class for backend failures; aborts the running dialogue."""


class TransportError(BackendError):
    """Network-level failure (connection, timeout, non-2xx after retries)."""


class ProtocolError(BackendError):
    """Backend responded but the payload violates the wire contract."""


class ScriptExhausted(BackendError):
    """A scripted backend was called more times than it has responses."""
