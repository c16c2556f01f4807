from collections import defaultdict

import pytest

_acceptance: dict[str, list[bool]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(label): acceptance-criterion test, summarized per label")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker:
        _acceptance[marker.args[0]].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for label in sorted(_acceptance):
        results = _acceptance[label]
        verdict = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(
            f"{verdict} {label} ({sum(results)}/{len(results)} checks)")
