import math

import pytest

from lpmbrw.model import make_model

BINARY_GAUSSIAN = {
    "family": "iid_product",
    "offspring": {"kind": "binary"},
    "displacement": {"kind": "gaussian", "mean": 0, "var": 1},
}
PLUS_MINUS = {"family": "deterministic_atoms", "atoms": [1, -1]}
THETA0_BG = math.sqrt(2 * math.log(2))


@pytest.fixture(scope="session")
def bg():
    return make_model(BINARY_GAUSSIAN)


@pytest.fixture(scope="session")
def pm():
    return make_model(PLUS_MINUS)


ACCEPTANCE_LINES = {}


def record_acceptance(number, passed, detail):
    ACCEPTANCE_LINES[number] = f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
