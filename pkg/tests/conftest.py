"""Shared pytest fixtures; the bulk of the helpers live in helpers.py."""

from pathlib import Path

import pytest

from chatcap.frames import load_frameset
from helpers import WireStub, write_frames


@pytest.fixture
def frame_dir(tmp_path):
    """Factory: frame_dir(count, name) -> directory of numbered PNG frames."""

    def make(count: int, name: str = "frames") -> Path:
        return write_frames(tmp_path / name, count)

    return make


@pytest.fixture
def frameset9(frame_dir):
    return load_frameset(frame_dir(9, "frames9"), 9)


@pytest.fixture
def wire_stub():
    stub = WireStub()
    stub.base_url = stub.start()
    yield stub
    stub.stop()
