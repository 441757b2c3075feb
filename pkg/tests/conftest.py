import pytest

_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one PASS/FAIL line per acceptance criterion.

    Lines print immediately (visible with -s) and are replayed in the
    terminal summary so they survive pytest's output capture.
    """
    def _report(num, name, ok, detail=""):
        line = f"[criterion {num}] {name}: {'PASS' if ok else 'FAIL'} {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        assert ok, f"criterion {num} ({name}) failed: {detail}"
    return _report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
