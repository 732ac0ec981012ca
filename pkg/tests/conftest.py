import pytest

# (criterion, passed, detail, seconds) appended by the acceptance suite
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k, ok, detail, secs in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'} ({secs:.1f} s) {detail}")


@pytest.fixture
def acceptance_record():
    return ACCEPTANCE
