import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = dict(item.user_properties).get("detail", "")
        n, title = mark.args
        entry = _RESULTS.setdefault(n, [title, True, []])
        entry[1] = entry[1] and rep.passed
        if detail:
            entry[2].append(detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_RESULTS):
        title, passed, details = _RESULTS[n]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"criterion {n} [{verdict}] {title}: {'; '.join(details)}")
