import pytest

from odakit.store import Ingester, SeriesStore
from odakit.transport import InProcessBus

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def bus():
    return InProcessBus()


@pytest.fixture
def store():
    return SeriesStore()


@pytest.fixture
def wired(bus, store):
    """Bus with an ingester writing into an in-memory store."""
    ing = Ingester(store, bus).start()
    yield bus, store
    ing.stop()


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
