import pytest

from answerer_service.service import StubAnswerer, load_fixture
from svc_helpers import start_service, write_fixture


@pytest.fixture
def stub_service(tmp_path):
    fixture = write_fixture(tmp_path / "fixture.json")
    service = start_service(StubAnswerer(load_fixture(fixture)))
    yield service
    service.stop()
