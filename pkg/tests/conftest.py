import pytest


def pytest_configure(config):
    config.criterion_lines = []


@pytest.fixture
def record_criterion(request):
    """Record one PASS/FAIL line for the acceptance summary."""
    def record(number, passed, detail, seconds):
        line = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  ({seconds:.1f} s)  {detail}"
        request.config.criterion_lines.append((number, line))
        print(line)
    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "criterion_lines", [])
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(lines):
        terminalreporter.write_line(line)
