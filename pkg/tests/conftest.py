"""Shared pytest wiring: echo the release-gate verdict lines at the end."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    try:
        from test_acceptance import GATE_LINES
    except ImportError:
        return
    if GATE_LINES:
        terminalreporter.section("release gate")
        for line in GATE_LINES:
            terminalreporter.write_line(line)
