import time

import numpy as np
import pytest

from ymflow.calculus import Grid
from ymflow.fields import FieldSpace


def make_space(n=8, bc="neumann", group="SU2"):
    grid = Grid.unit_torus(n) if bc == "periodic" else Grid.unit_box(n)
    return FieldSpace.make(grid, bc, group)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(params=["neumann", "dirichlet", "periodic"])
def bc(request):
    return request.param


# acceptance verdict lines, echoed in the terminal summary
ACCEPTANCE = {}


def record_acceptance(number, title, passed, detail):
    line = f"{'PASS' if passed else 'FAIL'} criterion {number:2d}: {title} ({detail})"
    ACCEPTANCE[number] = line
    print(line)
    return passed


def pytest_sessionstart(session):
    session.config._ymflow_start = time.perf_counter()


def pytest_collection_modifyitems(config, items):
    # acceptance runs last so criterion 12 can check the whole suite's runtime
    items.sort(key=lambda it: "test_acceptance" in it.nodeid)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
