"""Shared pytest wiring: the acceptance summary block.

Acceptance tests register one line per criterion; the hook prints them after
the run so the pass/fail record is visible even though pytest captures
stdout inside tests.
"""

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
