import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

# brute-force oracles are slow by design; wall-clock deadlines only add flakiness
settings.register_profile("bblab", deadline=None)
settings.load_profile("bblab")

_CRITERIA: dict = {}


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line per acceptance criterion; printed in the terminal summary."""
    marker = request.node.get_closest_marker("acceptance")
    label = marker.args[0] if marker and marker.args else request.node.name
    notes = {}
    yield notes
    rep = getattr(request.node, "rep_call", None)
    ok = rep is not None and rep.passed
    line = f"{label}: {'PASS' if ok else 'FAIL'}"
    if notes:
        line += "  (" + ", ".join(f"{k}={v}" for k, v in notes.items()) + ")"
    _CRITERIA[label] = line
    print("\n" + line)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        item.rep_call = rep


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[key])
