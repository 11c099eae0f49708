import pytest
from hypothesis import HealthCheck, settings

from eqindex import scalars as S
from eqindex.graded_algebra import clifford_convention

settings.register_profile(
    "default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

_LINES_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES_KEY] = []


@pytest.fixture
def acceptance_log(request):
    return request.config.stash[_LINES_KEY]


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda l: int(l.split("criterion")[1].split()[0])):
            terminalreporter.write_line(line)


@pytest.fixture
def exact():
    with S.precision("exact"):
        yield


@pytest.fixture
def f64():
    with S.precision("f64"):
        yield


@pytest.fixture
def flipped_clifford_sign():
    """Clifford relation c(v)^2 = +|v|^2 instead of the library's -|v|^2."""
    with clifford_convention(1):
        yield
