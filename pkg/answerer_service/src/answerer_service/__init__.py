"""Standalone VQA answerer microservice."""

from .service import ServiceConfig, StubAnswerer, make_server, main

__version__ = "0.1.0"

__all__ = ["ServiceConfig", "StubAnswerer", "make_server", "main", "__version__"]
