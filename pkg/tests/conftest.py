import pytest


def pytest_configure(config):
    config._acceptance = {}


@pytest.fixture
def record(request):
    """Store one pass/fail line per acceptance criterion for the terminal summary."""
    table = request.config._acceptance

    def _record(number, passed, detail):
        table[number] = (bool(passed), detail)
        return passed

    return _record


def pytest_terminal_summary(terminalreporter, config):
    table = getattr(config, "_acceptance", {})
    if not table:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(table):
        passed, detail = table[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
