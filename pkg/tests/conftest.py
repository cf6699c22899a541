import numpy as np
import pytest

from csra import _backend


@pytest.fixture(params=_backend.available())
def backend(request):
    """Run the test once per available kernel backend."""
    previous = _backend.current()
    _backend.use(request.param)
    yield request.param
    _backend.use(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
