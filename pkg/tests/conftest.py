import numpy as np
import pytest

from alphaflow import fields
from alphaflow.geometry import TorusGrid


@pytest.fixture(scope="session")
def grid64():
    return TorusGrid(64, 1.0)


@pytest.fixture(scope="session")
def wrap64(grid64):
    return fields.equatorial_wrap(grid64, 1)


def north(grid):
    return fields.constant(grid, np.array([0.0, 0.0, 1.0]))


ACCEPTANCE = {}


def record_criterion(number, ok, detail):
    ACCEPTANCE[number] = (bool(ok), detail)
    return ok


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
