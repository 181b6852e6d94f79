import numpy as np
import pytest

from slipflow.mesh import DomainSpec, build_strip_mesh, reference_bump_strip
from slipflow.navier_stokes import make_problem, solve_ns


@pytest.fixture(scope="session")
def bump_spec():
    return reference_bump_strip()


@pytest.fixture(scope="session")
def bump_solution(bump_spec):
    """Converged reference solve: bump strip, alpha = 1, flux 1e-2, 8 transverse cells."""
    sol = solve_ns(make_problem(bump_spec, 8, 1e-2))
    assert sol.converged
    return sol


@pytest.fixture(scope="session")
def straight_mesh():
    return build_strip_mesh(DomainSpec.straight_strip(3.0, 1.0, 1.0), 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
