import numpy as np
import pytest

from equidist.fibers import SolverSettings
from equidist.maps import preset


@pytest.fixture
def settings():
    return SolverSettings()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(params=["z2", "z3", "basilica", "cheb", "rat2"])
def map_k1(request):
    return preset(request.param)


def pytest_terminal_summary(terminalreporter):
    import sys

    module = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(module, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        terminalreporter.write_line(results[number])
