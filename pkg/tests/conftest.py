import pytest

# acceptance tests append "(label, passed, detail)" here
CRITERIA: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(CRITERIA, key=lambda s: (len(s), s)):
        ok, detail = CRITERIA[label]
        terminalreporter.write_line(f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def criteria():
    return CRITERIA
