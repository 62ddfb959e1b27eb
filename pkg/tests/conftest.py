from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
RESULTS = ROOT / "results"

_ACCEPTANCE: dict[str, str] = {}


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion; printed at the end of the run."""
    def record(name: str, ok: bool, detail: str):
        line = f"{name}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE[name] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[name])
