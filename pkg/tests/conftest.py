import re

from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")

_ACCEPTANCE = {}


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2).replace("_", " "))
    if report.when == "call" or report.outcome != "passed":
        _ACCEPTANCE[key] = _ACCEPTANCE.get(key, True) and report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for (num, name), ok in sorted(_ACCEPTANCE.items()):
        terminalreporter.write_line(f"ACCEPTANCE {num:2d} {'PASS' if ok else 'FAIL'}  {name}")
