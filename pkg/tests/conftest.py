import json
from collections import OrderedDict
from pathlib import Path

import pytest

FIXTURES = Path(__file__).parent / "fixtures"

# criterion id -> (title, [outcomes])
_ACCEPTANCE: "OrderedDict[int, list]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    n, title = marker.args
    entry = _ACCEPTANCE.setdefault(n, [title, []])
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        entry[1].append(rep.outcome)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, outcomes = _ACCEPTANCE[n]
        if outcomes and all(o == "passed" for o in outcomes):
            status = "PASS"
        elif outcomes and all(o == "skipped" for o in outcomes):
            status = "SKIP"
        else:
            status = "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {n}: {title}")


@pytest.fixture
def reference_metrics():
    return json.loads((FIXTURES / "reference_tables_metrics.json").read_text(encoding="utf-8"))
