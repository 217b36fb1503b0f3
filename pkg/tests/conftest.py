import numpy as np
import pytest

from nsverify import fields, mesh, ns_scheme
from nsverify.fem import TaylorHood

_SPACES = {}


def get_space(n: int) -> TaylorHood:
    if n not in _SPACES:
        _SPACES[n] = TaylorHood(mesh.build(n))
    return _SPACES[n]


@pytest.fixture(scope="session")
def space2():
    return get_space(2)


@pytest.fixture(scope="session")
def space4():
    return get_space(4)


@pytest.fixture(scope="session")
def tiny_run(space2):
    """Short Taylor-Green run with steady forcing on the coarsest mesh."""
    forcing = fields.SteadyForcing(fields.TaylorGreen(0.5))
    return ns_scheme.run(space2, fields.TaylorGreen(0.3), forcing, 0.1, 3, 1.0)


@pytest.fixture(scope="session")
def manufactured_run(space2):
    nu = 1.0
    forcing = fields.ManufacturedTaylorGreen(nu, lambda t: 0.5 * np.exp(-t), lambda t: -0.5 * np.exp(-t))
    return ns_scheme.run(space2, forcing.exact(0.0), forcing, 0.1, 3, nu)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
