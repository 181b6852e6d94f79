import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipflow.errors import ContractViolation, WallCrossingError
from slipflow.mesh import (DomainSpec, FacetTag, build_cross_section_mesh, build_mesh,
                           build_strip_mesh, bump_wall, curvature_at, default_star, flat_wall,
                           reference_bump_strip)

from oracles import graph_curvature_fd


def test_interval_uniform_partition():
    m = build_cross_section_mesh(DomainSpec.interval(1.0), 8)
    assert m.n_cells == 8
    np.testing.assert_allclose(np.sort(m.nodes[:, 0]), np.arange(9) / 8, atol=1e-15)
    assert set(m.points[m.wall_points, 0]) == {0.0, 1.0}


def test_disk_area_and_convergence():
    errs = [abs(build_cross_section_mesh(DomainSpec.disk(), n).area() - np.pi) for n in (4, 8, 16)]
    assert errs[2] < 1e-3
    # isoparametric boundary: at least second order
    assert errs[0] / errs[1] >= 4 and errs[1] / errs[2] >= 4


def test_disk_frames():
    m = build_cross_section_mesh(DomainSpec.disk(1.0), 8)
    x = m.points[m.wall_points]
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(m.normals, x, atol=1e-14)
    np.testing.assert_allclose(m.curvature, 1.0, atol=1e-12)
    # tau = (-n2, n1)
    np.testing.assert_allclose(m.tangents, np.stack([-x[:, 1], x[:, 0]], 1), atol=1e-14)


def test_straight_strip_mesh():
    spec = DomainSpec.straight_strip(4.0, 1.0)
    m = build_strip_mesh(spec, 4)
    assert m.structure["kind"] == "strip"
    assert np.all(np.abs(np.abs(m.normals[:, 0]) - 1) < 1e-14)
    assert np.all(m.curvature == 0)
    assert abs(m.area() - 8.0) < 1e-12
    ends = m.points[m.end_points]
    np.testing.assert_allclose(np.abs(ends[:, 1]), 4.0)
    assert {FacetTag.INFLOW.value, FacetTag.OUTFLOW.value, FacetTag.WALL.value} == set(m.facet_tags)


def test_bump_curvature_against_graph_formula():
    spec = reference_bump_strip()
    m = build_strip_mesh(spec, 4)
    i = np.flatnonzero((np.abs(m.points[m.wall_points, 1]) < 1e-12)
                       & (m.points[m.wall_points, 0] > 0.5))[0]
    b2 = spec.upper.d2(np.array([0.0]))[0]
    # upper wall outward normal (1, -b')/q; d_tau n = kappa tau gives kappa = -b''/q^3
    assert abs(m.curvature[i] - (-b2)) < 1e-12
    # finite-difference oracle on the tangent angle, away from the crest
    ws = m.points[m.wall_points]
    sel = (ws[:, 0] > 0.5) & (np.abs(ws[:, 1]) < 0.9)
    fd = graph_curvature_fd(spec.upper, ws[sel, 1])
    np.testing.assert_allclose(m.curvature[sel], fd, atol=2e-5)


def test_lower_wall_curvature_sign():
    spec = DomainSpec.distorted_strip(bump_wall(0.0, -0.2, 1.0), flat_wall(1.0), 5.0, 2.0)
    m = build_strip_mesh(spec, 4)
    ws = m.points[m.wall_points]
    i = np.flatnonzero((np.abs(ws[:, 1]) < 1e-12) & (ws[:, 0] < 0.5))[0]
    assert abs(m.curvature[i] - spec.lower.d2(np.array([0.0]))[0]) < 1e-12


@pytest.mark.parametrize("spec", [DomainSpec.disk(), default_star(), reference_bump_strip(),
                                  DomainSpec.straight_strip(3.0)])
def test_positive_jacobians(spec):
    m = build_mesh(spec, 6)
    assert m.min_jacobian() > 0


def test_star_curvature_matches_polar_formula():
    spec = default_star()
    m = build_cross_section_mesh(spec, 8)
    x = m.points[m.wall_points]
    th = np.arctan2(x[:, 1], x[:, 0])
    r, r1, r2 = spec.boundary_radius(th)
    kappa = (r * r + 2 * r1 * r1 - r * r2) / (r * r + r1 * r1) ** 1.5
    np.testing.assert_allclose(m.curvature, kappa, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(x, axis=1), r, atol=1e-12)


def test_curvature_at_rejects_interior_point():
    m = build_cross_section_mesh(DomainSpec.disk(), 4)
    centre = int(np.argmin(np.linalg.norm(m.points, axis=1)))
    with pytest.raises(ContractViolation):
        curvature_at(m, centre)
    assert abs(curvature_at(m, int(m.wall_points[0])) - 1.0) < 1e-12


@pytest.mark.parametrize("kwargs", [dict(alpha=0.0), dict(alpha=-1.0)])
def test_spec_rejects_nonpositive_friction(kwargs):
    with pytest.raises(ContractViolation):
        DomainSpec.disk(**kwargs)


def test_spec_rejects_short_truncation_and_bent_outlets():
    with pytest.raises(ContractViolation):
        DomainSpec.straight_strip(2.5, Z=2.0)
    with pytest.raises(ContractViolation):
        DomainSpec.distorted_strip(flat_wall(0.0), bump_wall(1.0, 0.3, 3.0), 6.0, 2.0)


def test_wall_crossing_reported_with_location():
    spec = DomainSpec.distorted_strip(flat_wall(0.0), bump_wall(1.0, -3.0, 1.0), 5.0, 2.0)
    with pytest.raises(WallCrossingError) as err:
        build_strip_mesh(spec, 4)
    assert abs(err.value.location) < 1.0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.02, 0.98), st.floats(-2.9, 2.9))
def test_locate_inverts_the_map(s, t):
    spec = reference_bump_strip(zeta=3.0, Z=1.5)
    m = build_strip_mesh(spec, 4)
    x = np.array([[s * spec.upper(np.array([t]))[0], t]])
    cell, refc = m.locate(x)
    assert cell[0] >= 0
    from slipflow import reference as ref
    N, _, _ = ref.q2_basis(refc[:, 0], refc[:, 1])
    np.testing.assert_allclose(N @ m.points[m.cells_q2[cell[0]]], x, atol=1e-9)
