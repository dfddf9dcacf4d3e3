import numpy as np
import pytest

from cempsync.groups import SO2, SO3, Z2, Perm

ALL_GROUPS = [Z2(), Perm(3), Perm(5), SO2(), SO3()]
GROUP_IDS = ["z2", "perm3", "perm5", "so2", "so3"]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(params=ALL_GROUPS, ids=GROUP_IDS)
def group(request):
    return request.param


# acceptance criteria report: tests in test_acceptance.py tag themselves with
# @pytest.mark.criterion(k, "title"); the terminal summary prints one line each

_criteria = {}


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    info = _criteria_info.get(report.nodeid)
    if info is None:
        return
    num, title = info
    ok, _ = _criteria.get(num, (True, title))
    _criteria[num] = (ok and report.outcome == "passed", title)


_criteria_info = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("criterion")
        if m is not None:
            _criteria_info[item.nodeid] = (m.args[0], m.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_criteria):
        ok, title = _criteria[num]
        terminalreporter.write_line(f"criterion {num}: {'PASS' if ok else 'FAIL'}  {title}")
