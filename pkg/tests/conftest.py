"""Shared pytest hooks for the test suite.

The acceptance module reports one summary line per acceptance check; the
terminal-summary hook below replays those lines at the end of the run so
they are visible in plain ``pytest -v`` output.
"""

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance checks")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
