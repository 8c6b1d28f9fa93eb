import numpy as np
import pytest

_CRITERIA: dict[int, dict] = {}


@pytest.fixture
def measured(request):
    """Record a measured value shown next to the criterion's pass/fail line."""
    def record(text: str):
        request.node.user_properties.append(("measured", text))
    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "ran": False, "notes": []})
    if report.when == "call" or report.failed:
        entry["ran"] = True
        entry["ok"] &= report.passed
    if report.when == "call":
        entry["notes"] += [v for k, v in item.user_properties if k == "measured" and v not in entry["notes"]]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        status = "PASS" if e["ran"] and e["ok"] else ("FAIL" if e["ran"] else "NOT RUN")
        notes = f" [{'; '.join(e['notes'])}]" if e["notes"] else ""
        terminalreporter.write_line(f"criterion {number:>2} {status}: {e['title']}{notes}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
