import pytest

_CRITERIA: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    number, title = marker.args
    _, states = _CRITERIA.setdefault(number, (title, []))
    if report.failed or report.when == "call":
        states.append(report.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, states = _CRITERIA[number]
        verdict = "PASS" if states and all(s == "passed" for s in states) else "FAIL"
        terminalreporter.write_line(f"criterion {number}: {verdict}  {title}")
