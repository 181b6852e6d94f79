import json
import math

import numpy as np
import pytest

from slipflow import io
from slipflow.fem import Family, Space, interpolate
from slipflow.mesh import DomainSpec, build_cross_section_mesh


def test_vtk_round_trip(bump_solution, tmp_path):
    s = bump_solution
    m = s.u.mesh
    path = io.write_vtk(tmp_path / "s.vtk", m, [s.u, s.p], title="t",
                        environment=io.environment_echo({"a": 1}, m))
    back = io.read_vtk_points(path)
    np.testing.assert_array_equal(back["points"][:, :2], m.points)
    np.testing.assert_array_equal(back["cells"], m.cells_q2[:, io.QUAD9_ORDER])
    assert set(back["types"]) == {io.VTK_QUAD9}
    np.testing.assert_array_equal(back["data"]["u"][:, :2], s.u.velocity())
    # pressure at vertices is exact, other points are interpolated
    np.testing.assert_array_equal(back["data"]["p"][: m.n_vertices], s.p.values)
    head = path.read_text().splitlines()[1]
    assert head.startswith("t ") and len(head) <= 255 and "config_hash" in head


def test_vtk_interval(tmp_path):
    m = build_cross_section_mesh(DomainSpec.interval(), 4)
    g = np.sin(m.points[:, 0])
    back = io.read_vtk_points(io.write_vtk(tmp_path / "g.vtk", m, [("g", g)]))
    assert set(back["types"]) == {io.VTK_EDGE3}
    np.testing.assert_array_equal(back["data"]["g"], g)


def test_vtk_node_order_is_counterclockwise():
    m = build_cross_section_mesh(DomainSpec.disk(), 2)
    corners = m.points[m.cells_q2[:, io.QUAD9_ORDER[:4]]]
    x, y = corners[..., 0], corners[..., 1]
    area = 0.5 * np.sum(x * np.roll(y, -1, 1) - np.roll(x, -1, 1) * y, axis=1)
    assert np.all(area > 0)


def test_point_values_of_q1_pressure():
    m = build_cross_section_mesh(DomainSpec.disk(), 4)
    p = interpolate(Space(m, Family.SCALAR_Q1), lambda x: 2 * x[:, 0] - x[:, 1] + 1)
    vals = io.point_values(p)
    # bilinear in the reference cell: exact at vertices, edge midpoints average
    np.testing.assert_allclose(vals[: m.n_vertices], p.values, atol=0)
    assert np.all(np.isfinite(vals))


def test_csv_round_trip(tmp_path):
    cols = {"x": np.linspace(0, 1, 7), "y": np.exp(np.linspace(0, 1, 7)) / 3}
    path = io.write_csv(tmp_path / "c.csv", cols, {"config_hash": "abc", "seed": 3})
    lines = path.read_text().splitlines()
    assert lines[:2] == ["# config_hash: abc", "# seed: 3"]
    back = io.read_csv(path)
    for k in cols:
        np.testing.assert_array_equal(back[k], cols[k])
    with pytest.raises(ValueError):
        io.write_csv(tmp_path / "bad.csv", {"a": [1, 2], "b": [1]})


def test_json_nonfinite_and_numpy(tmp_path):
    data = {"a": np.float64(1.5), "b": np.arange(3), "c": math.inf, "d": (np.bool_(True),)}
    path = io.write_json(tmp_path / "r.json", data, {"seed": 0})
    back = json.loads(path.read_text())
    assert back == {"a": 1.5, "b": [0, 1, 2], "c": "inf", "d": [True],
                    "environment": {"seed": 0}}


def test_config_hash_canonical():
    assert io.config_hash({"a": 1, "b": [1.0, 2]}) == io.config_hash({"b": [1.0, 2], "a": 1})
    assert io.config_hash({"a": 1}) != io.config_hash({"a": 2})
