import numpy as np
import pytest

from entropic_interp.marginals import gaussian_bump
from entropic_interp.space import build_torus_grid, build_weighted_graph

SWEEP = (0.4, 0.2, 0.1, 0.05, 0.02)


def two_node(w=0.25, m=(0.5, 0.5), length=1.0):
    return build_weighted_graph(2, [(0, 1, w, length)], measure=np.asarray(m))


def circle_bumps(n=64, centers=(0.3, 0.7), width=0.1):
    space = build_torus_grid(1, n, 1.0)
    return space, gaussian_bump(space, centers[0], width), gaussian_bump(space, centers[1], width)


@pytest.fixture
def pair():
    return two_node()


@pytest.fixture(scope="session")
def circle64():
    return circle_bumps(64)


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for key in sorted(results, key=lambda k: int(k.split()[0][1:])):
        status, lines = results[key]
        tr.write_line(f"{status}  {key}")
        for line in lines:
            tr.write_line(f"        {line}")
