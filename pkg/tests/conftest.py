import pytest

# criterion number -> (title, outcome); filled by tests marked ``criterion``
_CRITERIA: dict[int, list] = {}


def pytest_addoption(parser):
    parser.addoption("--derf", action="store", default=None, metavar="DIR",
                     help="directory holding the grayscale Derf test sequences")


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion check")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    n, title = marker
    entry = _CRITERIA.setdefault(n, [title, "PASS"])
    if report.skipped:
        if entry[1] == "PASS":
            entry[1] = "SKIP"
    elif report.failed:
        entry[1] = "FAIL"


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    m = item.get_closest_marker("criterion")
    if m is not None:
        report.criterion = tuple(m.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, status = _CRITERIA[n]
        terminalreporter.write_line(f"{status}  criterion {n:2d}: {title}")
