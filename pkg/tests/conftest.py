"""Shared pytest hooks.

Acceptance tests register one verdict line per criterion in ``ACCEPTANCE``;
the terminal summary prints them in criterion order.
"""

ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[k])
