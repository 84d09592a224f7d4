"""Collects acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_RESULTS: dict[int, dict] = {}


@pytest.fixture
def measured(request):
    """Record ``name = value`` pairs shown next to the criterion verdict."""
    values = []
    request.node.user_properties.append(("measured", values))

    def record(name, value):
        values.append((name, value))

    return record


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "setup" and report.outcome != "passed" or report.when == "call":
        number, title = marker.args
        values = dict(item.user_properties).get("measured", [])
        _RESULTS[number] = {"title": title, "passed": report.passed, "values": values,
                            "duration": report.duration}


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.4g}"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    return str(value)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        r = _RESULTS[number]
        verdict = "PASS" if r["passed"] else "FAIL"
        detail = "; ".join(f"{k} = {_fmt(v)}" for k, v in r["values"])
        line = f"criterion {number:2d} {verdict}  {r['title']}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
