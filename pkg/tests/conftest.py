import numpy as np
import pytest

from pcbnet import kernels


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    """Run a test once per available loop implementation."""
    prev = kernels.backend()
    kernels.use_backend(request.param)
    yield request.param
    kernels.use_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance verdicts, printed together at the end of the session
VERDICTS = []


@pytest.fixture
def verdict(capsys):
    def record(criterion, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}"
        VERDICTS.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
