import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from slipflow.errors import ContractViolation
from slipflow.fem import (AssembledSystem, Family, Field, SparseFactor, Space, apply_dirichlet,
                          assemble_convection, assemble_divergence_coupling,
                          assemble_slip_boundary_form, assemble_stress_form, convection_vector,
                          integrate, interpolate, load_vector, mass_matrix, saddle_matrix,
                          solve_system, stiffness_matrix)
from slipflow.mesh import (DomainSpec, build_cross_section_mesh, build_rectangle_mesh,
                           build_strip_mesh)


@pytest.fixture(scope="module")
def square():
    return build_rectangle_mesh(0.0, 1.0, 0.0, 1.0, 3, 3)


def _vec(space, f):
    return interpolate(space, f).values


def test_mass_and_load_integrate_area(square):
    V = Space(square, Family.SCALAR_Q2)
    one = np.ones(V.n_dofs)
    assert abs(one @ mass_matrix(V) @ one - 1.0) < 1e-14
    assert abs(load_vector(V, 1.0).sum() - 1.0) < 1e-14
    assert np.abs(stiffness_matrix(V) @ one).max() < 1e-13


def test_stress_form_oracles(square):
    V = Space(square, Family.VECTOR_Q2)
    A = assemble_stress_form(V)
    for f in (lambda x: np.ones_like(x), lambda x: np.stack([-x[:, 1], x[:, 0]], 1)):
        u = _vec(V, f)
        assert abs(u @ A @ u) < 1e-13
    u = _vec(V, lambda x: np.stack([x[:, 0], -x[:, 1]], 1))
    assert abs(u @ A @ u - 4.0) < 1e-13
    assert abs(A - A.T).max() < 1e-13


def test_slip_form_oracles():
    mesh = build_strip_mesh(DomainSpec.straight_strip(2.0, 0.5), 4)
    V = Space(mesh, Family.VECTOR_Q2)
    B1 = assemble_slip_boundary_form(V, 1.0)
    tangential = _vec(V, lambda x: np.stack([np.zeros(len(x)), np.ones(len(x))], 1))
    normal = _vec(V, lambda x: np.stack([np.ones(len(x)), np.zeros(len(x))], 1))
    # two walls of length 2 * zeta = 4
    assert abs(tangential @ B1 @ tangential - 8.0) < 1e-12
    assert abs(normal @ B1 @ normal) < 1e-14
    assert assemble_slip_boundary_form(V, 0.0).count_nonzero() == 0


def test_convection_oracles(square):
    V = Space(square, Family.VECTOR_Q2)
    assert assemble_convection(V, np.zeros(V.n_dofs)).count_nonzero() == 0
    b = _vec(V, lambda x: np.stack([np.zeros(len(x)), np.ones(len(x))], 1))
    u = _vec(V, lambda x: np.stack([np.zeros(len(x)), x[:, 1]], 1))
    C = assemble_convection(V, b)
    # (b.grad) u = (0, 1) so u.C u = int x2 = 1/2
    assert abs(u @ C @ u - 0.5) < 1e-14
    np.testing.assert_allclose(C @ u, convection_vector(V, b, u), atol=1e-15)


def test_divergence_coupling_oracles(square):
    W = Space(square, Family.MIXED_Q2Q1)
    V = W.velocity_space()
    B = assemble_divergence_coupling(W)
    rot = _vec(V, lambda x: np.stack([-x[:, 1], x[:, 0]], 1))
    assert np.abs(B @ rot).max() < 1e-15
    ux = _vec(V, lambda x: np.stack([x[:, 0], np.zeros(len(x))], 1))
    np.testing.assert_allclose(B @ ux, load_vector(Space(square, Family.SCALAR_Q1), 1.0),
                               atol=1e-15)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=10, max_size=10))
def test_curl_of_cubic_is_discretely_solenoidal(c):
    # affine cells: the biquadratic space contains the curl of any cubic
    mesh = build_rectangle_mesh(-1.0, 2.0, 0.0, 1.5, 3, 2)
    W = Space(mesh, Family.MIXED_Q2Q1)
    B = assemble_divergence_coupling(W)

    def curl(x):
        a, b = x[:, 0], x[:, 1]
        # psi = sum c_k a^i b^j over i + j <= 3
        d1 = np.zeros(len(x))
        d2 = np.zeros(len(x))
        k = 0
        for i in range(4):
            for j in range(4 - i):
                d1 += c[k] * i * a ** max(i - 1, 0) * b**j
                d2 += c[k] * j * a**i * b ** max(j - 1, 0)
                k += 1
        return np.stack([d2, -d1], 1)

    u = _vec(W.velocity_space(), curl)
    assert np.abs(B @ u).max() < 1e-12 * max(1.0, np.abs(u).max())


def test_field_evaluate_reproduces_quadratics(rng):
    mesh = build_strip_mesh(DomainSpec.straight_strip(2.0, 0.5), 3)
    S = Space(mesh, Family.SCALAR_Q2)
    f = lambda x: 1 + 2 * x[:, 0] - x[:, 1] + x[:, 0] * x[:, 1] + 0.5 * x[:, 1] ** 2
    F = interpolate(S, f)
    x = np.stack([rng.uniform(0, 1, 50), rng.uniform(-2, 2, 50)], 1)
    np.testing.assert_allclose(F.evaluate(x), f(x), atol=1e-12)
    vals, grad = F.evaluate(x, gradient=True)
    np.testing.assert_allclose(grad[:, 0], 2 + x[:, 1], atol=1e-11)
    np.testing.assert_allclose(grad[:, 1], -1 + x[:, 0] + x[:, 1], atol=1e-11)


def test_field_shape_is_checked(square):
    with pytest.raises(ContractViolation):
        Field(Space(square, Family.SCALAR_Q2), np.zeros(3))


def test_integrate_polynomial_on_disk():
    mesh = build_cross_section_mesh(DomainSpec.disk(), 16)
    q = mesh.quadrature
    r2 = np.sum(q.points**2, axis=-1)
    assert abs(integrate(mesh, r2) - np.pi / 2) < 1e-5


def test_sparse_factor_on_saddle_matrix(square, rng):
    W = Space(square, Family.MIXED_Q2Q1)
    V = W.velocity_space()
    K = saddle_matrix(W, assemble_stress_form(V) + mass_matrix(V))
    # pin all pressures but one plus nothing else: append a gauge row
    g = np.zeros(W.n_dofs)
    g[W.n_velocity:] = 1.0
    M = sp.bmat([[K, sp.csr_matrix(g[:, None])], [sp.csr_matrix(g[None, :]), None]], format="csc")
    x = rng.standard_normal(M.shape[0])
    x[-1] = 0.0
    x[W.n_velocity:-1] -= x[W.n_velocity:-1].mean()
    b = M @ x
    np.testing.assert_allclose(SparseFactor(M).solve(b), x, atol=1e-9)


def test_dirichlet_elimination(square):
    V = Space(square, Family.SCALAR_Q2)
    K = stiffness_matrix(V)
    bnd = square.wall_points
    u = lambda x: x[:, 0] ** 2 - x[:, 1] ** 2            # harmonic
    sys = apply_dirichlet(AssembledSystem(K, np.zeros(V.n_dofs)), bnd, u(square.points[bnd]))
    x = solve_system(sys)
    np.testing.assert_allclose(x, u(square.points), atol=1e-12)
