import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion checked by the test")


def pytest_collection_modifyitems(config, items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            num, title = mark.args
            item.user_properties.append(("criterion", (num, title)))
            _CRITERIA.setdefault(num, {"title": title, "outcomes": []})


def pytest_runtest_logreport(report):
    for key, value in report.user_properties:
        if key != "criterion":
            continue
        num = value[0]
        if report.when == "call" or report.outcome != "passed":
            _CRITERIA[num]["outcomes"].append((report.nodeid, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        entry = _CRITERIA[num]
        outcomes = [o for _, o in entry["outcomes"]]
        if not outcomes:
            status = "NOT RUN"
        elif "failed" in outcomes:
            status = "FAIL"
        elif all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "PASS"
        terminalreporter.write_line(f"criterion {num:>2}: {status:<7} {entry['title']}")
        for nodeid, outcome in entry["outcomes"]:
            if outcome != "passed":
                terminalreporter.write_line(f"              {outcome}: {nodeid}")
