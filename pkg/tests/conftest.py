import numpy as np
import pytest

from wentzell.evolution import EvolutionConfig
from wentzell.geometry import build_mesh, control_mask
from wentzell.operators import assemble

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def small_disk():
    mesh = build_mesh("disk", n_r=6, n_theta=16)
    op = assemble(mesh, 1.0, 1.0)
    region = control_mask(mesh, {"center": (0.0, 0.0), "radius": 0.5})
    return mesh, op, region


@pytest.fixture(scope="session")
def small_cfg():
    return EvolutionConfig(1.0, 40)


@pytest.fixture(scope="session")
def small_interval():
    mesh = build_mesh("interval", n=40)
    op = assemble(mesh, 1.0, 0.5)
    region = control_mask(mesh, {"segment": (0.3, 0.7)})
    return mesh, op, region


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
