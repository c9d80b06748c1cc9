import numpy as np
import pytest

from lumedbn import kernels

ACCEPTANCE_RESULTS = []

BACKENDS = ["numpy"] + (["numba"] if kernels.numba_backend is not None else [])


@pytest.fixture(params=BACKENDS)
def kern(request):
    return kernels.get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def record_acceptance(number, name, passed, detail=""):
    ACCEPTANCE_RESULTS.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, name, passed, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number}. {name}: {detail}")
