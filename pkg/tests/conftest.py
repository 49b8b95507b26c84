"""Shared pytest machinery: acceptance-summary reporting.

Acceptance tests record one PASS/FAIL line each through the ``acceptance``
fixture; the lines are echoed immediately and repeated, sorted by criterion
number, in a dedicated section at the end of the run.
"""

import pytest


def pytest_configure(config):
    config._acceptance_lines = []


@pytest.fixture(scope="session")
def acceptance(request):
    """Record one summary line for a numbered acceptance criterion."""
    lines = request.config._acceptance_lines

    def record(num, ok, detail):
        line = f"ACCEPTANCE {num:02d} {'PASS' if ok else 'FAIL'} - {detail}"
        lines.append(line)
        print(line, flush=True)
        return line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
