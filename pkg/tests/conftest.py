"""Shared pytest wiring.

The acceptance tests register one verdict line per criterion; printing it
directly would vanish into pytest's file-descriptor capture, so the lines
are replayed here in the terminal summary, after capture is released.
"""

criterion_lines: list = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not criterion_lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(criterion_lines):
        terminalreporter.write_line(line)
