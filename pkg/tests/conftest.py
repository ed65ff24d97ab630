from importlib import resources

import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240517)


@pytest.fixture
def data_dir():
    return resources.files("memcert") / "data"


_acceptance: dict[int, tuple[str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    if rep.failed or (rep.when == "call" and number not in _acceptance):
        _acceptance[number] = (title, "FAIL" if rep.failed else "PASS")


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_acceptance):
        title, status = _acceptance[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")
