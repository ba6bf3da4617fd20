import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ibrwatch.core import BinGrid, Series, SeriesId

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

# hourly bins keep unit tests fast: 168 bins per week
HOURLY = BinGrid(1289174400, 3600)
EG = SeriesId("country", "EG")


def make_series(values, grid=HOURLY, sid=EG):
    return Series(sid, grid, np.asarray(values, dtype=float))


@pytest.fixture
def hourly_grid():
    return HOURLY


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, text): acceptance criterion")


_criteria = []


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.failed):
        detail = dict(report.user_properties).get("measured", "")
        _criteria.append((marker.args[0], marker.args[1], report.passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, text, passed, detail in sorted(_criteria):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:>2}: {status}  {text}"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
