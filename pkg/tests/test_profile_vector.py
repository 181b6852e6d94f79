import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipflow.errors import CompatibilityError, ContractViolation, ProfileVectorError
from slipflow.mesh import (DomainSpec, build_cross_section_mesh, build_strip_mesh, bump_wall,
                           default_star, flat_wall, reference_bump_strip)
from slipflow.poiseuille import closed_form_reference, poiseuille_profile
from slipflow.profile_vector import (CutoffEta, PoiseuilleCarrier,
                                     build_flux_carrier, build_radial_carrier,
                                     cross_section_residuals, reference_profile_vector,
                                     solve_divergence_1d, solve_divergence_2d,
                                     solve_divergence_2d_direct)


def test_carrier_normalization_and_support():
    h = build_flux_carrier((0.25, 0.75), 1.0)
    x = np.linspace(0, 1, 2001)
    assert abs(h.antiderivative(np.array(0.75)) - 1.0) < 1e-12
    assert np.all(h(x[(x <= 0.25) | (x >= 0.75)]) == 0)
    assert not np.any(build_flux_carrier((0.25, 0.75), 0.0)(x))


@pytest.mark.parametrize("bounds", [(0.0, 0.5), (0.5, 1.0), (0.6, 0.4)])
def test_carrier_touching_wall_rejected(bounds):
    with pytest.raises(ContractViolation):
        build_flux_carrier(bounds, 1.0)


def test_cutoff_properties():
    eta = CutoffEta(2.0)
    x = np.linspace(-1, 3, 4001)
    assert np.all(eta(x[x <= 1.0]) == 0) and np.all(eta(x[x >= 2.0]) == 1)
    assert np.all(np.diff(eta(x)) >= 0)
    h = 1e-6
    xs = np.array([1.2, 1.5, 1.8])
    np.testing.assert_allclose(eta.d1(xs), (eta(xs + h) - eta(xs - h)) / (2 * h), atol=1e-7)
    np.testing.assert_allclose(eta.d2(xs), (eta.d1(xs + h) - eta.d1(xs - h)) / (2 * h), atol=1e-6)
    # integral from -inf
    np.testing.assert_allclose(eta.integral(np.array([2.0, 3.5])), [0.5, 2.0], atol=1e-14)


def test_divergence_1d():
    g = closed_form_reference(DomainSpec.interval(1.0, 1.0))
    A0 = solve_divergence_1d(PoiseuilleCarrier(g), g)
    assert np.abs(A0(np.linspace(0, 1, 11))).max() < 1e-15
    A = solve_divergence_1d(build_flux_carrier((0.25, 0.75), 1.0), g)
    assert abs(A(np.array(0.0))) <= 1e-12 and abs(A(np.array(1.0))) <= 1e-12
    assert np.abs(A(np.linspace(0, 1, 11))).max() > 0
    with pytest.raises(CompatibilityError) as err:
        solve_divergence_1d(build_flux_carrier((0.25, 0.75), 2.0), g)
    assert abs(err.value.residual - 1.0) < 1e-10


def test_straight_pipe_identity():
    spec = DomainSpec.straight_strip(4.0, 1.0)
    a = reference_profile_vector(spec, 1.0, carrier="poiseuille")
    x = np.stack([np.linspace(0, 1, 50), np.linspace(-4, 4, 50)], 1)
    g = closed_form_reference(spec)
    np.testing.assert_allclose(a.evaluate(x), np.stack([np.zeros(50), g(x[:, 0])], 1), atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.0, 1.0), st.floats(-6.0, 6.0), st.floats(1e-3, 5.0))
def test_strip_profile_vector_invariants(s, t, flux):
    spec = reference_bump_strip()
    a = reference_profile_vector(spec, flux)
    x1 = s * spec.upper(np.array([t]))[0]
    x = np.array([[x1, t]])
    assert abs(a.divergence(x)[0]) <= 1e-10 * flux
    assert abs(a.section_flux(np.array([t]))[0] - flux) <= 1e-10 * flux
    # gradient against central differences
    h = 1e-6
    G = a.gradient(x)[0]
    for d in range(2):
        e = np.zeros((1, 2))
        e[0, d] = h
        fd = (a.evaluate(x + e) - a.evaluate(x - e))[0] / (2 * h)
        np.testing.assert_allclose(G[:, d], fd, atol=1e-6 * max(flux, 1))


def test_outlet_dofs_equal_poiseuille():
    spec = reference_bump_strip()
    a = reference_profile_vector(spec, 1e-2)
    m = build_strip_mesh(spec, 4)
    ah = a.interpolate(m)
    out = np.abs(m.points[:, 1]) >= spec.Z
    g = closed_form_reference(spec, flux=1e-2)
    assert np.array_equal(ah.velocity()[out, 1], g(m.points[out, 0]))
    assert not ah.velocity()[out, 0].any()


def test_slip_condition_of_strip_profile_vector():
    spec = reference_bump_strip()
    a = reference_profile_vector(spec, 1.0)
    y = np.linspace(-6, 6, 301)
    for wall, sign in ((spec.lower, -1.0), (spec.upper, 1.0)):
        x1 = wall(y)
        b1 = wall.d1(y)
        n = sign * np.stack([np.ones_like(y), -b1], 1) / np.hypot(1, b1)[:, None]
        tau = np.stack([-n[:, 1], n[:, 0]], 1)
        x = np.stack([x1, y], 1)
        val, G = a.evaluate(x), a.gradient(x)
        S = 0.5 * (G + np.swapaxes(G, 1, 2))
        res = 2 * np.einsum("kij,kj,ki->k", S, n, tau) + np.sum(val * tau, 1)
        assert np.abs(np.sum(val * n, 1)).max() < 1e-14
        assert np.abs(res).max() < 1e-12


def test_profile_vector_rejections():
    with pytest.raises(ProfileVectorError) as err:
        reference_profile_vector(reference_bump_strip(), 1.0, carrier="poiseuille")
    assert err.value.check == "carrier_support"
    # lower wall entering the carrier support
    spec = DomainSpec.distorted_strip(bump_wall(0.0, 0.9, 1.0), flat_wall(1.0), 6.0, 2.0)
    with pytest.raises(ProfileVectorError):
        reference_profile_vector(spec, 1.0)
    # distortion reaching into the transition region |x2| in [Z/2, Z]
    spec = DomainSpec.distorted_strip(flat_wall(0.0), bump_wall(1.0, 0.3, 1.8), 6.0, 2.0)
    with pytest.raises(ProfileVectorError) as err:
        reference_profile_vector(spec, 1.0)
    assert err.value.check == "straight_transition"


def _cross_section_case(spec, n, radius):
    m = build_cross_section_mesh(spec, n)
    g = poiseuille_profile(spec, 1.0, 1.0, mesh=m)
    h = build_radial_carrier(radius, 1.0)
    gq, _ = g.profile.at_quadrature()
    return m, h(m.quadrature.points) - gq


def test_cross_section_trivial_carrier():
    m = build_cross_section_mesh(DomainSpec.disk(), 8)
    r = solve_divergence_2d(m, np.zeros(m.quadrature.weights.shape), 1.0)
    assert np.abs(r.A.values).max() < 1e-14


def test_cross_section_nonzero_mean_rejected():
    m = build_cross_section_mesh(DomainSpec.disk(), 4)
    with pytest.raises(CompatibilityError):
        solve_divergence_2d(m, lambda x: 1.0 + 0 * x[:, 0], 1.0)


@pytest.mark.parametrize("spec,radius", [(DomainSpec.disk(), 0.8), (default_star(), 0.4)])
def test_cross_section_residuals_converge(spec, radius):
    res = []
    for n in (8, 16):
        m, f = _cross_section_case(spec, n, radius)
        r = solve_divergence_2d(m, f, 1.0)
        res.append(cross_section_residuals(r.A, f, 1.0))
        assert res[-1]["normal"] < 1e-13
    assert np.log2(res[0]["divergence"] / res[1]["divergence"]) >= 1.5
    assert np.log2(res[0]["slip"] / res[1]["slip"]) >= 1.0


def test_cross_section_split_agrees_with_direct_solve():
    m, f = _cross_section_case(DomainSpec.disk(), 16, 0.8)
    A = solve_divergence_2d(m, f, 1.0).A
    Ad = solve_divergence_2d_direct(m, f, 1.0)
    ref = np.abs(Ad.values).max()
    assert np.abs(A.values - Ad.values).max() < 0.05 * ref
