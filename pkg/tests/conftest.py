import re

_AC = re.compile(r"test_ac(\d+)_")
_results: dict[int, tuple[str, str]] = {}
_labels: dict[int, str] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = _AC.match(item.name)
        if m:
            doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
            _labels[int(m.group(1))] = doc


def pytest_runtest_logreport(report):
    m = _AC.match(report.nodeid.split("::")[-1])
    if not m:
        return
    n = int(m.group(1))
    if report.when == "call" or report.outcome != "passed":
        _results[n] = (report.outcome, report.longreprtext.strip().splitlines()[-1] if report.failed else "")


def pytest_terminal_summary(terminalreporter):
    if not _labels:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_labels):
        outcome, why = _results.get(n, ("not run", ""))
        tag = {"passed": "PASS", "failed": "FAIL"}.get(outcome, "NOT RUN")
        line = f"[{tag}] AC{n} {_labels[n]}"
        if why:
            line += f": {why}"
        terminalreporter.write_line(line)
