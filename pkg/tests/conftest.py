import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE = {}


@pytest.fixture
def record():
    def _record(criterion, passed, detail):
        _ACCEPTANCE[criterion] = (passed, detail)
    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE, key=lambda c: int(c[1:])):
        passed, detail = _ACCEPTANCE[name]
        terminalreporter.write_line(f"{name}: {'PASS' if passed else 'FAIL'} - {detail}")
