from __future__ import annotations

import numpy as np
import pytest

from spimfg.grid import GridSpec, Policy


def periodic_grid(n: int, length: float = 2.0, steps: int = 3, dt: float = 0.1) -> GridSpec:
    return GridSpec.uniform(-length / 2, length / 2, n, steps * dt, steps, "periodic")


def neumann_grid(n: int, length: float = 2.0, steps: int = 3, dt: float = 0.1) -> GridSpec:
    return GridSpec.uniform(-length / 2, length / 2, n, steps * dt, steps, "neumann")


def random_policy(grid: GridSpec, rng: np.random.Generator, scale: float = 3.0) -> Policy:
    shape = (grid.time_steps, grid.dim, *grid.shape)
    return Policy(rng.uniform(-scale, scale, shape), rng.uniform(-scale, scale, shape))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# Acceptance tests register one verdict line per criterion here; the lines
# are echoed in the terminal summary so they survive output capturing.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
