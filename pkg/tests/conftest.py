import pytest

from blowuplab.coefficient import CoefficientK
from blowuplab.numerics import CartesianGrid
from blowuplab.profile import ground_state_bundle


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: runs that take more than a few seconds")


@pytest.fixture(scope="session")
def bundle():
    return ground_state_bundle()


@pytest.fixture(scope="session")
def grid():
    return CartesianGrid(16.0, 256)


@pytest.fixture(scope="session")
def k_smooth():
    return CoefficientK("quadratic_gaussian", 1.0, 1.0)


@pytest.fixture(scope="session")
def k_const():
    return CoefficientK("constant", 0.0, 0.0)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture(scope="session")
def acceptance_log(request):
    """Collects ``(number, passed, detail)`` for the end-of-session summary."""
    return request.config.stash.setdefault(_ACCEPTANCE_KEY, [])


def pytest_terminal_summary(terminalreporter, config):
    rows = config.stash.get(_ACCEPTANCE_KEY, [])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for number, passed, detail in sorted(rows):
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")
