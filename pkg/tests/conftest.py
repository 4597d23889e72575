import numpy as np
import pytest

from eddyieti.manufactured import CaseConfig
from eddyieti.timestep import discretize
from eddyieti.topology import Region

ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.line(line)


@pytest.fixture
def acceptance(request):
    """``record(label, ok, detail)`` prints and keeps one PASS/FAIL line."""
    lines = request.config.stash[ACCEPTANCE_LINES]

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {label}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


@pytest.fixture(scope="session")
def disc_p1_d2():
    """Default two-patch configuration, p=1, divs=2."""
    return discretize(1, 2)


@pytest.fixture(scope="session")
def disc_p1_d4():
    return discretize(1, 4)


@pytest.fixture(scope="session")
def disc_p2_d4():
    return discretize(2, 4)


@pytest.fixture(scope="session")
def insulator_single_p1_d2():
    case = CaseConfig(conductor=lambda c: False)
    return discretize(1, 2, patches=(1, 1, 1), case=case)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def all_insulator(center):
    return False


def region_list(disc):
    return [disc.grid.region_of(s) for s in range(disc.grid.n_patches)]


__all__ = ["Region", "all_insulator", "region_list"]
