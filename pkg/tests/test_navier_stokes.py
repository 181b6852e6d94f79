import numpy as np
import pytest

from slipflow.errors import ContractViolation
from slipflow.mesh import DomainSpec
from slipflow.navier_stokes import (continuation_sweep, h1_norm, make_problem,
                                    random_solenoidal_start, solve_ns, uniqueness_probe)


@pytest.fixture(scope="module")
def straight_problem():
    return make_problem(DomainSpec.straight_strip(4.0, 1.0, 1.0), 4, 1e-2, carrier="poiseuille")


def test_straight_strip_has_zero_deficit(straight_problem):
    sol = solve_ns(straight_problem)
    assert sol.converged
    assert h1_norm(sol.v) <= 1e-12
    assert len(sol.history) <= 2


def test_zero_flux_gives_zero_state(bump_spec):
    sol = solve_ns(make_problem(bump_spec, 4, 0.0))
    assert sol.converged
    assert not np.any(sol.u.values)
    assert np.abs(sol.p.values).max() == 0


def test_bump_solution(bump_solution):
    s = bump_solution
    assert s.converged and s.residual <= max(1e-10, 1e-12 * s.history[0]["residual"])
    assert h1_norm(s.v) > 0
    # u = v + a_h exactly
    np.testing.assert_array_equal(s.u.values, s.v.values + s.a.values)
    # v vanishes on the artificial ends
    ends = s.u.mesh.end_points
    assert not s.v.velocity()[ends].any()
    # Pi has zero mean and is bounded
    assert np.all(np.isfinite(s.Pi.values))


def test_newton_converges_quadratically(bump_spec):
    sol = solve_ns(make_problem(bump_spec, 6, 5.0, picard_steps=0))
    assert sol.converged
    second = sol.newton_quadratic()
    assert len(second) == 2 and all(d < 0 for d in second)
    r = [h["residual"] for h in sol.history]
    # superlinear contraction on the last step
    assert r[-1] < (r[-2] / r[0]) ** 1.5 * r[0]


def test_flux_ceiling(bump_spec):
    with pytest.raises(ContractViolation):
        solve_ns(make_problem(bump_spec, 4, 20.0))


def test_negative_flux_rejected(bump_spec):
    with pytest.raises(ContractViolation):
        make_problem(bump_spec, 4, -1.0)


def test_continuation(bump_spec):
    prob = make_problem(bump_spec, 4, 1e-2)
    sweep = continuation_sweep(prob, [1e-2, 1e-1, 1.0])
    assert sweep.reached == 1.0 and not sweep.failures
    assert [s.flux for s in sweep.solutions] == [1e-2, 1e-1, 1.0]
    empty = continuation_sweep(prob, [])
    assert empty.solutions == [] and empty.reached == 0.0
    with pytest.raises(ContractViolation):
        continuation_sweep(prob, [1.0, 0.1])


def test_warm_start_agrees_with_cold_start(bump_spec):
    prob = make_problem(bump_spec, 4, 0.1, atol=1e-13)
    cold = solve_ns(prob)
    warm = solve_ns(prob, cold.v.values * 0.9)
    d = h1_norm(type(cold.v)(cold.v.space, cold.v.values - warm.v.values))
    assert d <= 1e-10 * h1_norm(cold.v)


def test_random_start_satisfies_constraints(bump_spec, rng):
    prob = make_problem(bump_spec, 4, 1e-2)
    m = prob.mesh
    v = random_solenoidal_start(m, rng).reshape(-1, 2)
    assert not v[m.end_points].any()
    assert np.abs(np.sum(v[m.wall_points] * m.normals, 1)).max() < 1e-14
    assert np.abs(v).max() > 0


def test_uniqueness_probe(bump_spec):
    rep = uniqueness_probe(make_problem(bump_spec, 4, 1e-2), k=3, seed=7)
    assert len(rep.starts) == 3 and not rep.excluded
    assert rep.max_distance <= 1e-8
    with pytest.raises(ContractViolation):
        uniqueness_probe(make_problem(bump_spec, 4, 1e-2), k=1)
