import sys

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def record_criterion():
    def record(number: int, name: str, passed: bool, detail: str = ""):
        line = f"criterion {number} [{'PASS' if passed else 'FAIL'}] {name}"
        if detail:
            line += f" :: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line, file=sys.stderr)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(20180131)


def random_symmetric(rng, n, scale=1.0, zero_diag=True):
    a = rng.normal(size=(n, n))
    a = (a + a.T) / 2 * scale
    if zero_diag:
        np.fill_diagonal(a, 0.0)
    return a
