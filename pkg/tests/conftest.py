import logging

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")
    logging.getLogger("numba").setLevel(logging.WARNING)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        num, title = mark.args
        details = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        _RESULTS[num] = (title, "PASS" if rep.passed else "FAIL", details)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_RESULTS):
        title, status, details = _RESULTS[num]
        line = f"criterion {num:>2} {status}  {title}"
        terminalreporter.write_line(line + (f"  [{details}]" if details else ""))
