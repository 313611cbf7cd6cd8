import numpy as np
import pytest

from spintomo import SpinLength

# acceptance lines collected during the run and echoed in the terminal summary
ACCEPTANCE = []


def record_result(criterion: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  criterion {criterion}: {detail}"
    ACCEPTANCE.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


SPINS = [SpinLength(k) for k in range(1, 9)]
SMALL_SPINS = [SpinLength(k) for k in (1, 2, 3, 4)]


def frob(a, b) -> float:
    a = getattr(a, "matrix", a)
    b = getattr(b, "matrix", b)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b)))
