import numpy as np
import pytest

# one line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE = {}


def record(tag: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[tag] = (ok, detail)
    print(f"{tag} {'PASS' if ok else 'FAIL'}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(ACCEPTANCE, key=lambda t: int(t[1:])):
        ok, detail = ACCEPTANCE[tag]
        terminalreporter.write_line(f"{tag} {'PASS' if ok else 'FAIL'}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
