import re

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_outcomes: dict = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    key = int(m.group(1))
    detail = dict(report.user_properties).get("detail", "")
    previous = _outcomes.get(key)
    if report.failed or previous is None or report.when == "call":
        if previous and previous[1] == "FAIL":
            return
        status = "FAIL" if report.failed else ("SKIP" if report.skipped else "PASS")
        _outcomes[key] = (m.group(2).replace("_", " "), status, detail or (previous[2] if previous else ""))


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_outcomes):
        name, status, detail = _outcomes[key]
        line = f"criterion {key} ({name}): {status}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
