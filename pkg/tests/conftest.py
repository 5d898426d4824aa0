import numpy as np
import pytest

from lbmpc.plant import BuildingPlant, ZoneParams, reference_building
from lbmpc.sysid import ThermalModel

# outcomes of tests marked ``invariant``; read by the acceptance summary
INVARIANT_OUTCOMES = {}
# one pass/fail line per acceptance criterion, keyed by criterion number
ACCEPTANCE_LINES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "invariant: module invariant or property from the contract")
    config.addinivalue_line("markers", "acceptance: end-to-end acceptance criterion")


def pytest_collection_modifyitems(session, config, items):
    # acceptance checks run last so the invariant outcomes are known
    items.sort(key=lambda item: item.get_closest_marker("acceptance") is not None)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if item.get_closest_marker("invariant") is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        INVARIANT_OUTCOMES[item.nodeid] = report.passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for key in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[key])


@pytest.fixture(scope="session")
def ref_plant():
    return reference_building()


@pytest.fixture
def unit_zone():
    return ZoneParams("z", 1e6, 100.0, {}, 10.0)


@pytest.fixture
def unit_model():
    return ThermalModel(1.0, 100.0, 1e6, 600.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def single_zone_plant(C=1e6, U=100.0, p_min=-5000.0, p_max=10000.0):
    return BuildingPlant([ZoneParams("z", C, U, {}, 10.0, p_min, p_max)])
