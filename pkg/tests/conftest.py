import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one acceptance line: ``report(number, title, passed, detail)``."""

    def _report(number, title, passed, detail=""):
        ACCEPTANCE_LINES.append((number, title, bool(passed), detail))

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(ACCEPTANCE_LINES, key=lambda t: t[0]):
        status = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"[{status}] {number:>2}. {title}: {detail}")
