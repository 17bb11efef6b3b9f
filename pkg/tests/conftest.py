import numpy as np
import pytest
from hypothesis import settings

from spear import kernels

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def _backends():
    names = ["python"]
    try:
        kernels.load_backend("cython")
        names.insert(0, "cython")
    except ImportError:
        pass
    return names


BACKENDS = _backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Each available kernel implementation in turn."""
    return kernels.load_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed after the run
ACCEPTANCE = {}


def record(number, passed, detail):
    ACCEPTANCE[number] = f"C{number:<2} {'PASS' if passed else 'FAIL'}  {detail}"
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
