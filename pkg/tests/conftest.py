import functools

import pytest

from poolgame.equilibrium import EngineOptions
from poolgame.pooling import catalog


@functools.lru_cache(maxsize=None)
def _game(name):
    return catalog(name)


@pytest.fixture
def game():
    """Factory returning catalog games; instances are cached but never mutated by the library."""
    return _game


@pytest.fixture
def opts():
    return EngineOptions()


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
