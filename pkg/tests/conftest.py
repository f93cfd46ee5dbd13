"""Collects acceptance-criterion outcomes and prints one line per criterion."""

from collections import defaultdict

import pytest

_OUTCOMES = defaultdict(dict)
_TITLES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    _TITLES[number] = title
    key = item.name
    if rep.when == "call" or rep.failed or rep.skipped:
        prev = _OUTCOMES[number].get(key, "passed")
        _OUTCOMES[number][key] = "failed" if (rep.failed or prev == "failed") else rep.outcome


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        results = _OUTCOMES[number]
        failed = sorted(k for k, v in results.items() if v == "failed")
        skipped = sorted(k for k, v in results.items() if v == "skipped")
        status = "FAIL" if failed else ("SKIP" if skipped and len(skipped) == len(results) else "PASS")
        line = f"criterion {number} [{_TITLES[number]}]: {status} ({len(results) - len(failed)}/{len(results)} checks)"
        if failed:
            line += " failing: " + ", ".join(failed)
        tr.write_line(line)
