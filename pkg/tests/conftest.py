import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from shieldsim.field import FieldConfig, SeededRng
from shieldsim.runtime import Session

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def session():
    return Session(seed=1234)


@pytest.fixture
def rng():
    return SeededRng(99)


@pytest.fixture
def tiny_field():
    return FieldConfig(7)


def bigint_matmul(a, b, p):
    """Reference product with Python integers."""
    a = [[int(v) for v in row] for row in np.asarray(a)]
    b = [[int(v) for v in row] for row in np.asarray(b)]
    return np.array([[sum(a[i][t] * b[t][j] for t in range(len(b))) % p for j in range(len(b[0]))]
                     for i in range(len(a))], dtype=np.int64)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} :: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
