import numpy as np
import pytest

from crossdiff.grid import make_grid
from crossdiff.model import GrowthModel, Params


@pytest.fixture
def grid1d():
    return make_grid(1, 32, 1.0)


@pytest.fixture
def grid2d():
    return make_grid(2, (12, 10), (1.0, 0.8))


@pytest.fixture
def logistic_model():
    return GrowthModel.logistic(1.0, (1.0, 0.5, 0.2, 1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(20241019)


@pytest.fixture
def params():
    return Params(mu=1.0, nu=2.0, gamma=2.0, epsilon=1e-3)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    if rep.failed:
        reason = detail or str(rep.longrepr).strip().splitlines()[-1]
        item.config._criteria[number] = (title, "FAIL", reason)
    elif rep.when == "call":
        item.config._criteria[number] = (title, "PASS", detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    crit = getattr(config, "_criteria", {})
    if not crit:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(crit):
        title, verdict, detail = crit[number]
        terminalreporter.write_line(f"criterion {number:2d} {verdict}  {title}: {detail}")
