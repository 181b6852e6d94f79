"""Mapped structured meshes with isoparametric biquadratic geometry.

Cross-sections (intervals, disks, star-shaped domains) and truncated
distorted strip channels are generated from smooth block maps.  Every
mesh stores both the vertex grid (used by bilinear pressure spaces) and
the full biquadratic node set (``points``), whose first ``n_vertices``
entries coincide with ``nodes``.
"""

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from . import reference as ref
from .errors import ContractViolation, MeshGenerationError, WallCrossingError


class FacetTag(str, Enum):
    WALL = "wall"
    INFLOW = "inflow_end"
    OUTFLOW = "outflow_end"


# ---------------------------------------------------------------------------
# domain description
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WallProfile:
    """Graph x1 = b(x2) of a channel wall.

    ``d1`` and ``d2`` are optional analytic derivatives; when missing,
    derivatives come from a local quadratic fit of the sampled graph.
    """

    func: Callable
    d1: Optional[Callable] = None
    d2: Optional[Callable] = None
    label: str = "custom"

    def __call__(self, x):
        return np.asarray(self.func(np.asarray(x, dtype=float)), dtype=float)

    def derivatives(self, x, step=1e-4):
        x = np.asarray(x, dtype=float)
        if self.d1 is not None and self.d2 is not None:
            return (np.asarray(self.d1(x), dtype=float),
                    np.asarray(self.d2(x), dtype=float))
        # quadratic through (x-step, x, x+step)
        fm, f0, fp = self(x - step), self(x), self(x + step)
        return (fp - fm) / (2 * step), (fp - 2 * f0 + fm) / step**2


def flat_wall(level):
    level = float(level)
    return WallProfile(lambda x: np.full_like(x, level),
                       lambda x: np.zeros_like(x),
                       lambda x: np.zeros_like(x),
                       label=f"flat({level:g})")


def bump_wall(level, amplitude, half_width, center=0.0):
    """Wall ``level + amplitude*exp(-1/(1-t^2))``, t=(x-center)/half_width, |t|<1.

    Smooth with exactly compact support; flat outside the bump.
    """
    level, amp, w, c = float(level), float(amplitude), float(half_width), float(center)

    def parts(x):
        t = (np.asarray(x, dtype=float) - c) / w
        inside = np.abs(t) < 1.0
        s = np.where(inside, 1.0 - t * t, 1.0)
        e = np.where(inside, np.exp(-1.0 / s), 0.0)
        return t, s, e, inside

    def f(x):
        return level + amp * parts(x)[2]

    def d1(x):
        t, s, e, inside = parts(x)
        return np.where(inside, amp * e * (-2.0 * t / (w * s * s)), 0.0)

    def d2(x):
        t, s, e, inside = parts(x)
        val = e * (4.0 * t * t / s**4 - 2.0 / s**2 - 8.0 * t * t / s**3) / (w * w)
        return np.where(inside, amp * val, 0.0)

    return WallProfile(f, d1, d2, label=f"bump({level:g},{amp:g},{w:g},{c:g})")


@dataclass(frozen=True)
class DomainSpec:
    """Declarative description of a cross-section or a distorted strip.

    Use the classmethod constructors rather than filling fields directly.
    """

    kind: str
    alpha: float = 1.0
    length: float = 1.0
    radius: float = 1.0
    theta: Optional[tuple] = None
    radii: Optional[tuple] = None
    lower: Optional[WallProfile] = None
    upper: Optional[WallProfile] = None
    zeta: Optional[float] = None
    Z: Optional[float] = None

    def __post_init__(self):
        if self.kind not in ("interval", "disk", "star", "strip"):
            raise ContractViolation(f"unknown domain kind {self.kind!r}")
        if not self.alpha > 0:
            raise ContractViolation(f"friction coefficient must be positive, got {self.alpha}")
        if self.kind == "interval" and not self.length > 0:
            raise ContractViolation("interval length must be positive")
        if self.kind == "disk" and not self.radius > 0:
            raise ContractViolation("disk radius must be positive")
        if self.kind == "star":
            r = np.asarray(self.radii, dtype=float)
            if r.size < 4 or np.any(r <= 0):
                raise ContractViolation("star-shaped radius table must be strictly positive")
        if self.kind == "strip":
            self._check_strip()

    def _check_strip(self):
        if self.lower is None or self.upper is None:
            raise ContractViolation("strip needs lower and upper wall profiles")
        if not (self.Z is not None and self.Z > 0):
            raise ContractViolation("distortion half-length Z must be positive")
        if not (self.zeta is not None and self.zeta > self.Z + 1):
            raise ContractViolation(f"need zeta > Z + 1, got zeta={self.zeta}, Z={self.Z}")
        outlet = np.concatenate([np.linspace(-self.zeta, -self.Z, 200),
                                 np.linspace(self.Z, self.zeta, 200)])
        if (np.max(np.abs(self.lower(outlet))) > 1e-12
                or np.max(np.abs(self.upper(outlet) - 1.0)) > 1e-12):
            raise ContractViolation("walls must satisfy b- = 0, b+ = 1 for |x2| >= Z")

    # -- constructors -----------------------------------------------------
    @classmethod
    def interval(cls, length=1.0, alpha=1.0):
        return cls("interval", alpha=float(alpha), length=float(length))

    @classmethod
    def disk(cls, radius=1.0, alpha=1.0):
        return cls("disk", alpha=float(alpha), radius=float(radius))

    @classmethod
    def star_shaped(cls, theta, radii, alpha=1.0):
        return cls("star", alpha=float(alpha),
                   theta=tuple(np.asarray(theta, dtype=float)),
                   radii=tuple(np.asarray(radii, dtype=float)))

    @classmethod
    def distorted_strip(cls, lower, upper, zeta, Z, alpha=1.0):
        return cls("strip", alpha=float(alpha), lower=lower, upper=upper,
                   zeta=float(zeta), Z=float(Z))

    @classmethod
    def straight_strip(cls, zeta, Z=1.0, alpha=1.0):
        return cls.distorted_strip(flat_wall(0.0), flat_wall(1.0), zeta, Z, alpha)

    # -- geometry helpers ---------------------------------------------------
    @cached_property
    def _spline(self):
        th = np.asarray(self.theta, dtype=float)
        r = np.asarray(self.radii, dtype=float)
        order = np.argsort(np.mod(th, 2 * np.pi))
        th = np.mod(th, 2 * np.pi)[order]
        r = r[order]
        return CubicSpline(np.append(th, th[0] + 2 * np.pi), np.append(r, r[0]),
                           bc_type="periodic")

    def boundary_radius(self, theta):
        """Radius r(theta) with first and second derivatives."""
        theta = np.asarray(theta, dtype=float)
        if self.kind == "disk":
            r = np.full_like(theta, self.radius)
            return r, np.zeros_like(theta), np.zeros_like(theta)
        if self.kind == "star":
            sp = self._spline
            t = np.mod(theta, 2 * np.pi)
            return sp(t), sp(t, 1), sp(t, 2)
        raise ContractViolation(f"{self.kind} has no polar boundary")

    @property
    def is_straight(self):
        if self.kind != "strip":
            return False
        x = np.linspace(-self.zeta, self.zeta, 2001)
        return (np.max(np.abs(self.lower(x))) <= 1e-14
                and np.max(np.abs(self.upper(x) - 1.0)) <= 1e-14)


# ---------------------------------------------------------------------------
# mesh container
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VolumeQuadrature:
    weights: np.ndarray      # (nc, nq) including |det J|
    points: np.ndarray       # (nc, nq, dim)
    N: np.ndarray            # (nq, 3**dim)
    grad: np.ndarray         # (nc, nq, 3**dim, dim)
    M: np.ndarray            # (nq, 2**dim) linear basis
    grad_M: np.ndarray       # (nc, nq, 2**dim, dim)
    ref_points: np.ndarray
    ref_weights: np.ndarray


@dataclass(frozen=True)
class FacetQuadrature:
    cells: np.ndarray        # (nf,)
    tags: np.ndarray         # (nf,) of str
    weights: np.ndarray      # (nf, nq)
    points: np.ndarray       # (nf, nq, dim)
    normals: np.ndarray      # (nf, nq, dim)
    tangents: np.ndarray     # (nf, nq, dim) or empty for 1D
    N: np.ndarray            # (nf, nq, 3**dim)
    grad: np.ndarray         # (nf, nq, 3**dim, dim)
    local_t: np.ndarray      # (nq,) edge parameter of each point

    def select(self, tags):
        mask = np.isin(self.tags, [str(getattr(t, "value", t)) for t in tags])
        return mask


@dataclass(frozen=True, eq=False)
class Mesh:
    dim: int
    nodes: np.ndarray
    cells: np.ndarray
    points: np.ndarray
    cells_q2: np.ndarray
    facets: np.ndarray
    facet_cells: np.ndarray
    facet_edges: np.ndarray
    facet_tags: np.ndarray
    wall_points: np.ndarray
    normals: np.ndarray
    tangents: Optional[np.ndarray]
    curvature: np.ndarray
    jacobians: np.ndarray
    jacobian_dets: np.ndarray
    spec: Optional[DomainSpec] = None
    structure: dict = field(default_factory=dict)

    @property
    def n_cells(self):
        return self.cells.shape[0]

    @property
    def n_vertices(self):
        return self.nodes.shape[0]

    @property
    def n_points(self):
        return self.points.shape[0]

    @cached_property
    def wall_index(self):
        """Map point index -> row in the boundary frame arrays (-1 if not on a wall)."""
        idx = np.full(self.n_points, -1, dtype=int)
        idx[self.wall_points] = np.arange(self.wall_points.size)
        return idx

    def tagged_points(self, *tags):
        names = [str(getattr(t, "value", t)) for t in tags]
        sel = np.isin(self.facet_tags, names)
        return np.unique(self.facets[sel].ravel())

    @cached_property
    def end_points(self):
        return self.tagged_points(FacetTag.INFLOW, FacetTag.OUTFLOW)

    def frame(self, point):
        row = self.wall_index[point]
        if row < 0:
            raise ContractViolation(f"point {point} does not lie on a wall facet")
        tau = None if self.tangents is None else self.tangents[row]
        return self.normals[row], tau, self.curvature[row]

    @cached_property
    def quadrature(self):
        return _volume_quadrature(self, 3)

    def volume_quadrature(self, n=3):
        if n == 3:
            return self.quadrature
        return _volume_quadrature(self, n)

    @cached_property
    def facet_quadrature(self):
        return _facet_quadrature(self, 3)

    def area(self):
        return float(self.quadrature.weights.sum())

    def min_jacobian(self):
        return float(self.jacobian_dets.min())

    @cached_property
    def _centroid_tree(self):
        cent = self.points[self.cells_q2].mean(axis=1)
        return cKDTree(cent)

    def locate(self, x, tol=1e-10):
        """Find (cell, reference coordinates) for physical points ``x``.

        Points outside the mesh get cell index -1.
        """
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.dim == 1:
            x = x.reshape(-1)
            v = self.nodes[:, 0]
            order = np.argsort(v)
            vs = v[order]
            k = np.clip(np.searchsorted(vs, x, side="right") - 1, 0, vs.size - 2)
            # cells of an interval mesh are ordered left to right
            cell = k
            a, b = self.points[self.cells_q2[cell, 0], 0], self.points[self.cells_q2[cell, 2], 0]
            t = 2.0 * (x - a) / (b - a) - 1.0
            outside = (x < vs[0] - tol) | (x > vs[-1] + tol)
            cell = np.where(outside, -1, cell)
            return cell, t[:, None]
        m = x.shape[0]
        cell = np.full(m, -1, dtype=int)
        refc = np.zeros((m, 2))
        k = min(12, self.n_cells)
        _, cand = self._centroid_tree.query(x, k=k)
        cand = np.atleast_2d(cand).reshape(m, k)
        for r in range(k):
            todo = np.flatnonzero(cell < 0)
            if todo.size == 0:
                break
            cells = cand[todo, r]
            xi = _invert_map(self.points[self.cells_q2[cells]], x[todo])
            ok = np.all(np.abs(xi) <= 1.0 + 1e-9, axis=1)
            cell[todo[ok]] = cells[ok]
            refc[todo[ok]] = np.clip(xi[ok], -1.0, 1.0)
        return cell, refc


def _invert_map(X, x, iters=30):
    """Newton inversion of the biquadratic map for each (cell nodes, target) pair."""
    xi = np.zeros((x.shape[0], 2))
    for _ in range(iters):
        N, dN, _ = ref.q2_basis(xi[:, 0], xi[:, 1])
        pos = np.einsum("mk,mki->mi", N, X)
        J = np.einsum("mki,mkj->mij", X, dN)
        r = x - pos
        step = np.linalg.solve(J, r[..., None])[..., 0]
        xi = xi + step
        xi = np.clip(xi, -3.0, 3.0)
        if np.max(np.abs(step)) < 1e-14:
            break
    return xi


# ---------------------------------------------------------------------------
# quadrature / geometry
# ---------------------------------------------------------------------------

def _volume_quadrature(mesh, n):
    if mesh.dim == 1:
        t, w = ref.gauss_legendre(n)
        N, dN = ref.p2(t), ref.dp2(t)
        M, dM = ref.p1(t), ref.dp1(t)
        X = mesh.points[mesh.cells_q2, 0]
        J = X @ dN.T                                     # (nc, nq)
        grad = (dN[None, :, :] / J[:, :, None])[..., None]
        gradM = (dM[None, :, :] / J[:, :, None])[..., None]
        pts = (X @ N.T)[..., None]
        return VolumeQuadrature(w[None, :] * np.abs(J), pts, N, grad, M, gradM,
                                t[:, None], w)
    rp, rw = ref.tensor_rule(n)
    N, dN, _ = ref.q2_basis(rp[:, 0], rp[:, 1])
    M, dM = ref.q1_basis(rp[:, 0], rp[:, 1])
    X = mesh.points[mesh.cells_q2]
    J = np.einsum("cki,qkj->cqij", X, dN)
    det = np.linalg.det(J)
    inv = np.linalg.inv(J)
    grad = np.einsum("qkj,cqji->cqki", dN, inv)
    gradM = np.einsum("qkj,cqji->cqki", dM, inv)
    pts = np.einsum("qk,cki->cqi", N, X)
    return VolumeQuadrature(rw[None, :] * det, pts, N, grad, M, gradM, rp, rw)


def _facet_quadrature(mesh, n):
    nf = mesh.facet_cells.size
    if mesh.dim == 1:
        t_end = np.array([-1.0, 1.0])
        cells = mesh.facet_cells
        side = mesh.facet_edges          # 0 = left end of cell, 1 = right end
        tq = t_end[side]
        N = ref.p2(tq)
        dN = ref.dp2(tq)
        X = mesh.points[mesh.cells_q2[cells], 0]
        J = np.sum(X * dN, axis=1)
        grad = (dN / J[:, None])[:, None, :, None]
        pts = np.sum(X * N, axis=1)[:, None, None]
        normals = np.where(side == 0, -1.0, 1.0)[:, None, None]
        return FacetQuadrature(cells, mesh.facet_tags, np.ones((nf, 1)), pts, normals,
                               np.zeros((nf, 1, 0)), N[:, None, :], grad, np.zeros(1))
    t, w = ref.gauss_legendre(n)
    weights = np.zeros((nf, n))
    pts = np.zeros((nf, n, 2))
    normals = np.zeros((nf, n, 2))
    tangents = np.zeros((nf, n, 2))
    Nall = np.zeros((nf, n, 9))
    gall = np.zeros((nf, n, 9, 2))
    for e in range(4):
        sel = np.flatnonzero(mesh.facet_edges == e)
        if sel.size == 0:
            continue
        rp = ref.edge_reference_points(e, t)
        N, dN, _ = ref.q2_basis(rp[:, 0], rp[:, 1])
        X = mesh.points[mesh.cells_q2[mesh.facet_cells[sel]]]
        J = np.einsum("cki,qkj->cqij", X, dN)
        inv = np.linalg.inv(J)
        dref = np.array([1.0, 0.0]) if e in (0, 2) else np.array([0.0, 1.0])
        dxdt = np.einsum("cqij,j->cqi", J, dref)
        length = np.linalg.norm(dxdt, axis=-1)
        tang = dxdt / length[..., None]
        nrm = np.stack([tang[..., 1], -tang[..., 0]], axis=-1)
        x = np.einsum("qk,cki->cqi", N, X)
        centroid = X.mean(axis=1)[:, None, :]
        flip = np.sum(nrm * (x - centroid), axis=-1) < 0
        nrm = np.where(flip[..., None], -nrm, nrm)
        weights[sel] = w[None, :] * length
        pts[sel] = x
        normals[sel] = nrm
        tangents[sel] = np.stack([-nrm[..., 1], nrm[..., 0]], axis=-1)
        Nall[sel] = N[None]
        gall[sel] = np.einsum("qkj,cqji->cqki", dN, inv)
    return FacetQuadrature(mesh.facet_cells, mesh.facet_tags, weights, pts, normals,
                           tangents, Nall, gall, t)


# ---------------------------------------------------------------------------
# generation
# ---------------------------------------------------------------------------

def _block_grid(fmap, m, n):
    """Biquadratic node grid (2m+1, 2n+1, 2) of a block map on [0,1]^2."""
    s = np.linspace(0.0, 1.0, 2 * m + 1)
    t = np.linspace(0.0, 1.0, 2 * n + 1)
    S, T = np.meshgrid(s, t, indexing="ij")
    x, y = fmap(S, T)
    return np.stack([x, y], axis=-1)


def _merge_blocks(grids, tol=1e-9):
    pts, cells = [], []
    offset = 0
    for g in grids:
        P, Q = g.shape[0], g.shape[1]
        m, n = (P - 1) // 2, (Q - 1) // 2
        pts.append(g.reshape(-1, 2))
        i, j = np.meshgrid(np.arange(m), np.arange(n), indexing="ij")
        i, j = i.ravel(), j.ravel()
        loc = []
        for k in range(9):
            a, b = k % 3, k // 3
            loc.append(offset + (2 * i + a) * Q + (2 * j + b))
        cells.append(np.stack(loc, axis=1))
        offset += P * Q
    pts = np.concatenate(pts)
    cells = np.concatenate(cells)
    canon = np.arange(pts.shape[0])
    pairs = cKDTree(pts).query_pairs(tol, output_type="ndarray")
    if pairs.size:
        # union-find towards the smallest index
        parent = np.arange(pts.shape[0])

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for a, b in pairs:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
        canon = np.array([find(a) for a in range(pts.shape[0])])
    cells = canon[cells]
    # vertices first, in order of first appearance
    vert = np.unique(cells[:, ref.Q1_IN_Q2])
    used = np.unique(cells)
    other = np.setdiff1d(used, vert)
    order = np.concatenate([vert, other])
    new = np.full(pts.shape[0], -1, dtype=int)
    new[order] = np.arange(order.size)
    return pts[order], new[cells], vert.size


def _boundary_facets(cells_q2):
    edges = []
    for e in range(4):
        loc = ref.EDGE_NODES[e]
        nodes = cells_q2[:, loc]
        edges.append((np.arange(cells_q2.shape[0]), np.full(cells_q2.shape[0], e), nodes))
    cid = np.concatenate([c for c, _, _ in edges])
    eid = np.concatenate([e for _, e, _ in edges])
    nodes = np.concatenate([n for _, _, n in edges])
    key = np.sort(nodes[:, [0, 2]], axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    bnd = counts[inv] == 1
    return nodes[bnd], cid[bnd], eid[bnd]


def _finish_2d(points, cells_q2, nv, facet_tagger, frame_fn, spec, structure):
    nodes = points[:nv]
    cells = cells_q2[:, ref.Q1_IN_Q2]
    facets, fcells, fedges = _boundary_facets(cells_q2)
    tags = facet_tagger(points[facets[:, 1]])
    wall = np.unique(facets[tags == FacetTag.WALL.value].ravel())
    n, tau, kappa = frame_fn(points[wall])
    rp, _ = ref.tensor_rule(3)
    _, dN, _ = ref.q2_basis(rp[:, 0], rp[:, 1])
    J = np.einsum("cki,qkj->cqij", points[cells_q2], dN)
    det = np.linalg.det(J)
    bad = np.flatnonzero(np.min(det, axis=1) <= 0)
    if bad.size:
        raise MeshGenerationError(f"non-positive Jacobian in cell {bad[0]}", cell=int(bad[0]))
    for a in (nodes, cells, points, cells_q2, facets, fcells, fedges, tags, wall, n, tau,
              kappa, J, det):
        a.setflags(write=False)
    return Mesh(2, nodes, cells, points, cells_q2, facets, fcells, fedges, tags, wall,
                n, tau, kappa, J, det, spec, structure)


def _interval_mesh(spec, resolution):
    L = spec.length
    nv = resolution + 1
    v = np.linspace(0.0, L, nv)
    mid = 0.5 * (v[:-1] + v[1:])
    points = np.concatenate([v, mid])[:, None]
    cells = np.stack([np.arange(resolution), np.arange(1, nv)], axis=1)
    cells_q2 = np.stack([cells[:, 0], nv + np.arange(resolution), cells[:, 1]], axis=1)
    facets = np.array([[0], [nv - 1]])
    fcells = np.array([0, resolution - 1])
    fedges = np.array([0, 1])
    tags = np.array([FacetTag.WALL.value, FacetTag.WALL.value])
    wall = np.array([0, nv - 1])
    normals = np.array([[-1.0], [1.0]])
    kappa = np.zeros(2)
    t, _ = ref.gauss_legendre(3)
    J = (points[cells_q2, 0] @ ref.dp2(t).T)[..., None, None]
    det = J[..., 0, 0]
    if np.min(det) <= 0:
        bad = int(np.argmin(np.min(det, axis=1)))
        raise MeshGenerationError(f"non-positive Jacobian in cell {bad}", cell=bad)
    return Mesh(1, v[:, None], cells, points, cells_q2, facets, fcells, fedges, tags, wall,
                normals, None, kappa, J, det, spec, {"kind": "interval", "n": resolution})


def _polar_frames(spec, x):
    th = np.arctan2(x[:, 1], x[:, 0])
    r, dr, d2r = spec.boundary_radius(th)
    c, s = np.cos(th), np.sin(th)
    dP = np.stack([dr * c - r * s, dr * s + r * c], axis=-1)
    tau = dP / np.linalg.norm(dP, axis=1)[:, None]
    n = np.stack([tau[:, 1], -tau[:, 0]], axis=-1)
    kappa = (r * r + 2 * dr * dr - r * d2r) / (r * r + dr * dr) ** 1.5
    return n, tau, kappa


def _polar_mesh(spec, resolution):
    n = resolution
    nr = max(1, (n + 1) // 2)
    r_min = float(np.min(spec.boundary_radius(np.linspace(0, 2 * np.pi, 721))[0]))
    c = 0.5 * r_min

    def center(S, T):
        return c * (2 * S - 1), c * (2 * T - 1)

    grids = [_block_grid(center, n, n)]
    for k in range(4):
        rot = k * np.pi / 2
        ck, sk = np.cos(rot), np.sin(rot)

        def outer(S, T, ck=ck, sk=sk, rot=rot):
            # S: radial (outward), T: along the side (counter-clockwise)
            ix, iy = c, c * (2 * T - 1)
            th = np.pi / 4 * (2 * T - 1)
            r = spec.boundary_radius(th + rot)[0]
            ox, oy = r * np.cos(th), r * np.sin(th)
            x = (1 - S) * ix + S * ox
            y = (1 - S) * iy + S * oy
            return ck * x - sk * y, sk * x + ck * y

        grids.append(_block_grid(outer, nr, n))
    points, cells_q2, nv = _merge_blocks(grids)

    def tagger(x):
        return np.full(x.shape[0], FacetTag.WALL.value)

    return _finish_2d(points, cells_q2, nv, tagger, lambda x: _polar_frames(spec, x), spec,
                      {"kind": spec.kind, "n": n, "nr": nr})


def build_cross_section_mesh(spec, resolution):
    """Mesh an interval, disk or star-shaped cross-section.

    ``resolution`` is the number of cells per direction (for polar
    domains: of the central block; the four outer blocks carry
    ``ceil(resolution/2)`` radial layers).
    """
    if spec.kind not in ("interval", "disk", "star"):
        raise ContractViolation(f"build_cross_section_mesh does not handle {spec.kind!r}")
    if resolution < 2:
        raise ContractViolation("resolution must be at least 2")
    if spec.kind == "interval":
        return _interval_mesh(spec, int(resolution))
    return _polar_mesh(spec, int(resolution))


def _strip_frames(spec, x):
    y = x[:, 1]
    lo, up = spec.lower(y), spec.upper(y)
    is_up = np.abs(x[:, 0] - up) < np.abs(x[:, 0] - lo)
    d1l, d2l = spec.lower.derivatives(y)
    d1u, d2u = spec.upper.derivatives(y)
    b1 = np.where(is_up, d1u, d1l)
    b2 = np.where(is_up, d2u, d2l)
    q = np.sqrt(1 + b1 * b1)
    sgn = np.where(is_up, 1.0, -1.0)
    n = np.stack([sgn / q, -sgn * b1 / q], axis=-1)
    tau = np.stack([-n[:, 1], n[:, 0]], axis=-1)
    kappa = -sgn * b2 / q**3
    return n, tau, kappa


def build_strip_mesh(spec, resolution, axial_resolution=None):
    """Boundary-fitted mesh of the truncated strip ``|x2| <= zeta``.

    ``resolution`` counts transverse cells; the axial count defaults to
    ``ceil(2*zeta*resolution)`` (roughly square cells on the outlets).
    """
    if spec.kind != "strip":
        raise ContractViolation("build_strip_mesh needs a distorted strip spec")
    if resolution < 2:
        raise ContractViolation("resolution must be at least 2")
    nx = int(resolution)
    ny = int(axial_resolution) if axial_resolution else int(np.ceil(2 * spec.zeta * nx))
    zeta = spec.zeta
    probe = np.linspace(-zeta, zeta, max(4001, 8 * ny + 1))
    gap = spec.upper(probe) - spec.lower(probe)
    if np.any(gap <= 0):
        loc = float(probe[np.argmax(gap <= 0)])
        raise WallCrossingError(f"walls cross at x2 = {loc:.6g}", location=loc)

    def fmap(S, T):
        y = -zeta + 2 * zeta * T
        lo = spec.lower(y)
        return lo + S * (spec.upper(y) - lo), y

    grid = _block_grid(fmap, nx, ny)
    points, cells_q2, nv = _merge_blocks([grid])

    def tagger(x):
        tags = np.full(x.shape[0], FacetTag.WALL.value, dtype=object)
        tags[np.abs(x[:, 1] + zeta) < 1e-9] = FacetTag.INFLOW.value
        tags[np.abs(x[:, 1] - zeta) < 1e-9] = FacetTag.OUTFLOW.value
        return tags.astype(str)

    mesh = _finish_2d(points, cells_q2, nv, tagger, lambda x: _strip_frames(spec, x), spec,
                      {"kind": "strip", "nx": nx, "ny": ny, "zeta": zeta})
    return mesh


def build_mesh(spec, resolution, **kwargs):
    if spec.kind == "strip":
        return build_strip_mesh(spec, resolution, **kwargs)
    return build_cross_section_mesh(spec, resolution)


def curvature_at(mesh, point):
    """Signed curvature at a wall point (positive where the domain is convex)."""
    return float(mesh.frame(point)[2])


def reference_bump_strip(alpha=1.0, zeta=6.0, Z=2.0, amplitude=0.3):
    """Strip with a smooth bulge of the upper wall supported in |x2| < Z/2."""
    return DomainSpec.distorted_strip(flat_wall(0.0), bump_wall(1.0, amplitude, Z / 2),
                                      zeta=zeta, Z=Z, alpha=alpha)


def default_star(alpha=1.0, lobes=3, amplitude=0.15, samples=96):
    th = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    return DomainSpec.star_shaped(th, 1.0 + amplitude * np.cos(lobes * th), alpha=alpha)


def build_rectangle_mesh(x0, x1, y0, y1, nx, ny):
    """Axis-aligned rectangle, all facets tagged as walls.

    Used for form verification; corner normals are the normalized sum of
    the two adjacent side normals.
    """
    def fmap(S, T):
        return x0 + S * (x1 - x0), y0 + T * (y1 - y0)

    points, cells_q2, nv = _merge_blocks([_block_grid(fmap, nx, ny)])
    h = 1e-9 * max(x1 - x0, y1 - y0)

    def frames(x):
        n = np.zeros_like(x)
        n[:, 0] = np.where(np.abs(x[:, 0] - x1) < h, 1.0, 0.0) - np.where(np.abs(x[:, 0] - x0) < h, 1.0, 0.0)
        n[:, 1] = np.where(np.abs(x[:, 1] - y1) < h, 1.0, 0.0) - np.where(np.abs(x[:, 1] - y0) < h, 1.0, 0.0)
        n /= np.linalg.norm(n, axis=1)[:, None]
        return n, np.stack([-n[:, 1], n[:, 0]], axis=-1), np.zeros(x.shape[0])

    return _finish_2d(points, cells_q2, nv, lambda x: np.full(x.shape[0], FacetTag.WALL.value),
                      frames, None, {"kind": "rectangle", "nx": nx, "ny": ny})
