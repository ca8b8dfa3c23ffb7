import numpy as np
import pytest

from ejectshap import kernels
from ejectshap.tree_model import fixture_t1

X_T1 = np.array([0.2, 0.3, 0.8])
REF_T1 = np.array([[0.2, 0.3, 0.8], [0.9, 0.9, 0.1]])


@pytest.fixture
def t1():
    return fixture_t1()


@pytest.fixture(params=kernels.available_backends())
def backend(request):
    with kernels.backend_context(request.param):
        yield request.param


ACCEPTANCE_LINES: list[str] = []


def record(criterion: str, ok: bool, detail: str) -> bool:
    line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
