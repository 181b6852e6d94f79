"""Function spaces, discrete fields and assembly of the finite-element forms.

Velocity dofs are interleaved by point (dof ``2*p + c`` is component ``c``
at biquadratic node ``p``); in the mixed space the bilinear pressure dofs
follow the velocity block, indexed by mesh vertex.  Local element
matrices of vector spaces are ordered by component first, i.e. the local
index of (component c, node a) is ``9*c + a``.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import reference as ref
from .errors import ContractViolation
from .mesh import FacetTag


class Family(str, Enum):
    SCALAR_Q2 = "ScalarQ2"
    SCALAR_Q1 = "ScalarQ1"
    VECTOR_Q2 = "VectorQ2"
    MIXED_Q2Q1 = "MixedQ2Q1"


@dataclass(frozen=True, eq=False)
class Space:
    mesh: object
    family: Family

    def __post_init__(self):
        if self.family in (Family.VECTOR_Q2, Family.MIXED_Q2Q1) and self.mesh.dim != 2:
            raise ContractViolation("vector spaces need a two-dimensional mesh")

    @property
    def is_vector(self):
        return self.family in (Family.VECTOR_Q2, Family.MIXED_Q2Q1)

    @property
    def n_velocity(self):
        return 2 * self.mesh.n_points if self.is_vector else 0

    @property
    def n_pressure(self):
        return self.mesh.n_vertices if self.family == Family.MIXED_Q2Q1 else 0

    @property
    def n_dofs(self):
        if self.family == Family.SCALAR_Q2:
            return self.mesh.n_points
        if self.family == Family.SCALAR_Q1:
            return self.mesh.n_vertices
        return self.n_velocity + self.n_pressure

    @property
    def pressure_offset(self):
        return self.n_velocity

    def cell_dofs(self):
        m = self.mesh
        if self.family == Family.SCALAR_Q2:
            return m.cells_q2
        if self.family == Family.SCALAR_Q1:
            return m.cells
        return np.concatenate([2 * m.cells_q2, 2 * m.cells_q2 + 1], axis=1)

    def pressure_cell_dofs(self):
        return self.n_velocity + self.mesh.cells

    def velocity_space(self):
        return Space(self.mesh, Family.VECTOR_Q2)

    def mixed(self):
        return Space(self.mesh, Family.MIXED_Q2Q1)

    def rotation(self, skip_points=()):
        """Sparse T with (cartesian dofs) = T @ (frame dofs).

        At each wall point not listed in ``skip_points`` the pair
        (2p, 2p+1) is rotated into (u_n, u_tau).
        """
        if not self.is_vector:
            raise ContractViolation("rotation is defined for vector spaces only")
        m = self.mesh
        if m.tangents is None:
            raise ContractViolation("mesh carries no boundary tangents")
        skip = np.zeros(m.n_points, dtype=bool)
        skip[np.asarray(skip_points, dtype=int)] = True
        keep = ~skip[m.wall_points]
        p = m.wall_points[keep]
        n, t = m.normals[keep], m.tangents[keep]
        diag = np.ones(self.n_dofs)
        diag[2 * p] = 0.0
        diag[2 * p + 1] = 0.0
        rows = [np.arange(self.n_dofs), 2 * p, 2 * p, 2 * p + 1, 2 * p + 1]
        cols = [np.arange(self.n_dofs), 2 * p, 2 * p + 1, 2 * p, 2 * p + 1]
        vals = [diag, n[:, 0], t[:, 0], n[:, 1], t[:, 1]]
        T = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                          shape=(self.n_dofs, self.n_dofs)).tocsr()
        T.eliminate_zeros()
        return T, 2 * p


@dataclass(eq=False)
class Field:
    space: Space
    values: np.ndarray
    name: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.space.n_dofs,):
            raise ContractViolation(
                f"field has {self.values.size} dofs, space expects {self.space.n_dofs}")

    @property
    def mesh(self):
        return self.space.mesh

    def velocity(self):
        """Point-wise velocity array (n_points, 2)."""
        if not self.space.is_vector:
            raise ContractViolation("scalar field has no velocity")
        return self.values[: self.space.n_velocity].reshape(-1, 2)

    def pressure(self):
        if self.space.family != Family.MIXED_Q2Q1:
            raise ContractViolation("field has no pressure component")
        return self.values[self.space.n_velocity:]

    def velocity_field(self, name=None):
        vs = self.space.velocity_space()
        return Field(vs, self.values[: vs.n_dofs].copy(), name or self.name)

    def pressure_field(self, name=None):
        ps = Space(self.mesh, Family.SCALAR_Q1)
        return Field(ps, self.pressure().copy(), name or self.name)

    def cell_values(self):
        """Nodal values per cell: (nc, nb) for scalars, (nc, 9, 2) for velocity."""
        m = self.mesh
        if self.space.is_vector:
            return self.velocity()[m.cells_q2]
        if self.space.family == Family.SCALAR_Q1:
            return self.values[m.cells]
        return self.values[m.cells_q2]

    def at_quadrature(self, quad=None):
        """Values and gradients at volume quadrature points."""
        q = quad or self.mesh.quadrature
        loc = self.cell_values()
        if self.space.family == Family.SCALAR_Q1:
            return (np.einsum("qk,ck->cq", q.M, loc),
                    np.einsum("cqkd,ck->cqd", q.grad_M, loc))
        if self.space.is_vector:
            return (np.einsum("qk,cki->cqi", q.N, loc),
                    np.einsum("cqkd,cki->cqid", q.grad, loc))
        return (np.einsum("qk,ck->cq", q.N, loc),
                np.einsum("cqkd,ck->cqd", q.grad, loc))

    def at_facets(self, fq=None):
        """Values and gradients at facet quadrature points (one-sided, from the owning cell)."""
        fq = fq or self.mesh.facet_quadrature
        m = self.mesh
        if self.space.family == Family.SCALAR_Q1:
            raise ContractViolation("facet evaluation implemented for biquadratic fields")
        if self.space.is_vector:
            loc = self.velocity()[m.cells_q2[fq.cells]]
            return (np.einsum("fqk,fki->fqi", fq.N, loc),
                    np.einsum("fqkd,fki->fqid", fq.grad, loc))
        loc = self.values[m.cells_q2[fq.cells]]
        return np.einsum("fqk,fk->fq", fq.N, loc), np.einsum("fqkd,fk->fqd", fq.grad, loc)

    def evaluate(self, x, gradient=False):
        """Evaluate at arbitrary physical points (NaN outside the mesh)."""
        m = self.mesh
        cell, xi = m.locate(x)
        ok = cell >= 0
        c = np.where(ok, cell, 0)
        if m.dim == 1:
            N, dN = ref.p2(xi[:, 0]), ref.dp2(xi[:, 0])
            X = m.points[m.cells_q2[c], 0]
            J = np.sum(X * dN, axis=1)
            loc = self.values[m.cells_q2[c]]
            val = np.sum(N * loc, axis=1)
            grad = (np.sum(dN * loc, axis=1) / J)[:, None]
        else:
            N, dN, _ = ref.q2_basis(xi[:, 0], xi[:, 1])
            X = m.points[m.cells_q2[c]]
            J = np.einsum("mki,mkj->mij", X, dN)
            G = np.einsum("mkj,mji->mki", dN, np.linalg.inv(J))
            if self.space.family == Family.SCALAR_Q1:
                M, dM = ref.q1_basis(xi[:, 0], xi[:, 1])
                loc = self.values[m.cells[c]]
                val = np.sum(M * loc, axis=1)
                grad = np.einsum("mk,mkd->md",
                                 loc, np.einsum("mkj,mji->mki", dM, np.linalg.inv(J)))
            elif self.space.is_vector:
                loc = self.velocity()[m.cells_q2[c]]
                val = np.einsum("mk,mki->mi", N, loc)
                grad = np.einsum("mkd,mki->mid", G, loc)
            else:
                loc = self.values[m.cells_q2[c]]
                val = np.sum(N * loc, axis=1)
                grad = np.einsum("mkd,mk->md", G, loc)
        val = np.where(ok.reshape((-1,) + (1,) * (val.ndim - 1)), val, np.nan)
        if gradient:
            grad = np.where(ok.reshape((-1,) + (1,) * (grad.ndim - 1)), grad, np.nan)
            return val, grad
        return val


def interpolate(space, func, name=""):
    """Nodal interpolant of ``func(x) -> values`` into a biquadratic space."""
    m = space.mesh
    if space.family == Family.SCALAR_Q2:
        return Field(space, np.asarray(func(m.points), dtype=float).reshape(-1), name)
    if space.family == Family.SCALAR_Q1:
        return Field(space, np.asarray(func(m.nodes), dtype=float).reshape(-1), name)
    vals = np.zeros(space.n_dofs)
    vals[: space.n_velocity] = np.asarray(func(m.points), dtype=float).reshape(-1)
    return Field(space, vals, name)


# ---------------------------------------------------------------------------
# sparse scatter helpers
# ---------------------------------------------------------------------------

def _scatter(rows, cols, local, shape):
    nc, a = rows.shape
    b = cols.shape[1]
    R = np.broadcast_to(rows[:, :, None], (nc, a, b)).ravel()
    C = np.broadcast_to(cols[:, None, :], (nc, a, b)).ravel()
    return sp.coo_matrix((local.ravel(), (R, C)), shape=shape).tocsr()


def _scatter_vec(rows, local, n):
    out = np.zeros(n)
    np.add.at(out, rows.ravel(), local.ravel())
    return out


def _check_mesh(space, other):
    if other.mesh is not space.mesh:
        raise ContractViolation("fields live on different meshes")


def _as_velocity(space, b):
    if isinstance(b, Field):
        _check_mesh(space, b.space)
        return b.velocity()
    b = np.asarray(b, dtype=float)
    return b[: space.n_velocity].reshape(-1, 2)


# ---------------------------------------------------------------------------
# scalar forms
# ---------------------------------------------------------------------------

def _scalar_basis(space, quad):
    if space.family == Family.SCALAR_Q1:
        return quad.M, quad.grad_M, space.mesh.cells
    if space.family == Family.SCALAR_Q2:
        return quad.N, quad.grad, space.mesh.cells_q2
    raise ContractViolation("scalar space required")


def mass_matrix(space):
    q = space.mesh.quadrature
    if space.is_vector:
        Ms = mass_matrix(Space(space.mesh, Family.SCALAR_Q2))
        return _velocity_block(space, sp.kron(Ms, sp.identity(2)).tocsr())
    N, _, dofs = _scalar_basis(space, q)
    loc = np.einsum("cq,qa,qb->cab", q.weights, N, N)
    return _scatter(dofs, dofs, loc, (space.n_dofs, space.n_dofs))


def _velocity_block(space, A):
    """Embed a velocity-sized matrix into the full mixed space."""
    if space.family != Family.MIXED_Q2Q1:
        return A
    n = space.n_dofs
    A = A.tocoo()
    return sp.coo_matrix((A.data, (A.row, A.col)), shape=(n, n)).tocsr()


def stiffness_matrix(space):
    q = space.mesh.quadrature
    _, G, dofs = _scalar_basis(space, q)
    loc = np.einsum("cq,cqad,cqbd->cab", q.weights, G, G)
    return _scatter(dofs, dofs, loc, (space.n_dofs, space.n_dofs))


def boundary_mass_matrix(space, tags=(FacetTag.WALL,)):
    if space.family != Family.SCALAR_Q2:
        raise ContractViolation("boundary mass implemented for ScalarQ2")
    m = space.mesh
    fq = m.facet_quadrature
    sel = fq.select(tags)
    loc = np.einsum("fq,fqa,fqb->fab", fq.weights[sel], fq.N[sel], fq.N[sel])
    dofs = m.cells_q2[fq.cells[sel]]
    return _scatter(dofs, dofs, loc, (space.n_dofs, space.n_dofs))


def load_vector(space, f=1.0):
    """Scalar load ``int f N_i``; ``f`` is a constant or callable of points."""
    q = space.mesh.quadrature
    N, _, dofs = _scalar_basis(space, q)
    fq = _eval_source(f, q.points)
    loc = np.einsum("cq,cq,qa->ca", q.weights, fq, N)
    return _scatter_vec(dofs, loc, space.n_dofs)


def _eval_source(f, pts):
    if callable(f):
        flat = pts.reshape(-1, pts.shape[-1])
        return np.asarray(f(flat), dtype=float).reshape(pts.shape[:2] + np.shape(f(flat))[1:])
    return np.full(pts.shape[:2], float(f))


def integrate(mesh, values_q):
    """Integrate values given at volume quadrature points."""
    return float(np.sum(mesh.quadrature.weights * values_q))


# ---------------------------------------------------------------------------
# vector / mixed forms
# ---------------------------------------------------------------------------

def _require_vector(space):
    if not space.is_vector:
        raise ContractViolation(f"{space.family.value} has no vector velocity component")


def assemble_stress_form(space):
    """Matrix of ``2 int S u : S phi`` on the velocity dofs (embedded if mixed)."""
    _require_vector(space)
    q = space.mesh.quadrature
    G, w = q.grad, q.weights
    lap = np.einsum("cq,cqad,cqbd->cab", w, G, G)
    cross = np.einsum("cq,cqak,cqbl->cabkl", w, G, G)   # d_k N_a d_l N_b
    nc = lap.shape[0]
    loc = np.zeros((nc, 2, 9, 2, 9))                     # (l, a, k, b)
    for l in range(2):
        for k in range(2):
            loc[:, l, :, k, :] = cross[:, :, :, k, l] + (lap if k == l else 0.0)
    dofs = space.cell_dofs()
    return _scatter(dofs, dofs, loc.reshape(nc, 18, 18), (space.n_dofs, space.n_dofs))


def assemble_vector_laplacian(space):
    _require_vector(space)
    q = space.mesh.quadrature
    lap = np.einsum("cq,cqad,cqbd->cab", q.weights, q.grad, q.grad)
    nc = lap.shape[0]
    loc = np.zeros((nc, 2, 9, 2, 9))
    loc[:, 0, :, 0, :] = lap
    loc[:, 1, :, 1, :] = lap
    dofs = space.cell_dofs()
    return _scatter(dofs, dofs, loc.reshape(nc, 18, 18), (space.n_dofs, space.n_dofs))


def assemble_div_curl_form(space):
    """Matrix of ``int div u div phi + curl u curl phi`` (curl u = d1 u2 - d2 u1)."""
    _require_vector(space)
    q = space.mesh.quadrature
    G = q.grad
    C = np.stack([-G[..., 1], G[..., 0]], axis=-1)        # curl of N e_k, indexed by k
    loc = (np.einsum("cq,cqal,cqbk->clakb", q.weights, G, G)
           + np.einsum("cq,cqal,cqbk->clakb", q.weights, C, C))
    nc = loc.shape[0]
    dofs = space.cell_dofs()
    return _scatter(dofs, dofs, loc.reshape(nc, 18, 18), (space.n_dofs, space.n_dofs))


def divergence_load(space, f_q):
    """Vector ``int f div phi_i`` for ``f`` given at volume quadrature points."""
    _require_vector(space)
    q = space.mesh.quadrature
    loc = np.einsum("cq,cq,cqal->cla", q.weights, f_q, q.grad)
    return _scatter_vec(space.cell_dofs(), loc.reshape(-1, 18), space.n_dofs)


def assemble_slip_boundary_form(space, alpha, tags=(FacetTag.WALL,)):
    """Matrix of ``alpha * int_wall (u.tau)(phi.tau)``."""
    _require_vector(space)
    m = space.mesh
    if m.tangents is None:
        raise ContractViolation("wall frames are missing")
    fq = m.facet_quadrature
    sel = fq.select(tags)
    N, t, w = fq.N[sel], fq.tangents[sel], fq.weights[sel]
    loc = alpha * np.einsum("fq,fqa,fqb,fql,fqk->flakb", w, N, N, t, t)
    nf = loc.shape[0]
    cells = m.cells_q2[fq.cells[sel]]
    dofs = np.concatenate([2 * cells, 2 * cells + 1], axis=1)
    return _scatter(dofs, dofs, loc.reshape(nf, 18, 18), (space.n_dofs, space.n_dofs))


def assemble_boundary_traction(space, traction, tags=(FacetTag.WALL,)):
    """Load ``int_wall t (phi.tau)`` for scalar tangential data ``t(x)``."""
    _require_vector(space)
    m = space.mesh
    fq = m.facet_quadrature
    sel = fq.select(tags)
    pts = fq.points[sel]
    if callable(traction):
        tv = np.asarray(traction(pts.reshape(-1, 2)), dtype=float).reshape(pts.shape[:2])
    else:
        # constant, or values at the selected facet quadrature points
        tv = np.broadcast_to(np.asarray(traction, dtype=float), pts.shape[:2])
    loc = np.einsum("fq,fq,fqa,fql->fla", fq.weights[sel], tv, fq.N[sel], fq.tangents[sel])
    cells = m.cells_q2[fq.cells[sel]]
    dofs = np.concatenate([2 * cells, 2 * cells + 1], axis=1)
    return _scatter_vec(dofs, loc.reshape(-1, 18), space.n_dofs)


def assemble_convection(space, b):
    """Matrix of ``int ((b . grad) u) . phi`` for a fixed advecting velocity ``b``."""
    _require_vector(space)
    q = space.mesh.quadrature
    bl = _as_velocity(space, b)[space.mesh.cells_q2]
    bq = np.einsum("qk,cki->cqi", q.N, bl)
    adv = np.einsum("cq,qa,cqd,cqbd->cab", q.weights, q.N, bq, q.grad)
    nc = adv.shape[0]
    loc = np.zeros((nc, 2, 9, 2, 9))
    loc[:, 0, :, 0, :] = adv
    loc[:, 1, :, 1, :] = adv
    dofs = space.cell_dofs()
    return _scatter(dofs, dofs, loc.reshape(nc, 18, 18), (space.n_dofs, space.n_dofs))


def assemble_reaction(space, b):
    """Matrix of ``int ((u . grad) b) . phi`` (the second Newton convection term)."""
    _require_vector(space)
    q = space.mesh.quadrature
    bl = _as_velocity(space, b)[space.mesh.cells_q2]
    gb = np.einsum("cqkd,cki->cqid", q.grad, bl)          # d_d b_i
    loc = np.einsum("cq,qa,qb,cqlk->clakb", q.weights, q.N, q.N, gb)
    nc = loc.shape[0]
    dofs = space.cell_dofs()
    return _scatter(dofs, dofs, loc.reshape(nc, 18, 18), (space.n_dofs, space.n_dofs))


def convection_vector(space, b, u):
    """Vector ``int ((b . grad) u) . phi_i``."""
    _require_vector(space)
    q = space.mesh.quadrature
    m = space.mesh
    bq = np.einsum("qk,cki->cqi", q.N, _as_velocity(space, b)[m.cells_q2])
    gu = np.einsum("cqkd,cki->cqid", q.grad, _as_velocity(space, u)[m.cells_q2])
    conv = np.einsum("cqd,cqid->cqi", bq, gu)
    loc = np.einsum("cq,qa,cqi->cia", q.weights, q.N, conv)
    return _scatter_vec(space.cell_dofs(), loc.reshape(-1, 18), space.n_dofs)


def assemble_divergence_coupling(space):
    """Matrix B with ``B[i, j] = int q_i div phi_j`` (pressure rows, velocity cols)."""
    if space.family != Family.MIXED_Q2Q1:
        raise ContractViolation("divergence coupling needs the mixed space")
    q = space.mesh.quadrature
    loc = np.einsum("cq,qi,cqbk->cikb", q.weights, q.M, q.grad)
    nc = loc.shape[0]
    rows = space.mesh.cells
    return _scatter(rows, space.cell_dofs(), loc.reshape(nc, 4, 18),
                    (space.n_pressure, space.n_velocity))


def vector_load(space, f):
    """Load ``int f . phi`` for a constant 2-vector or callable ``f(x) -> (m, 2)``."""
    _require_vector(space)
    q = space.mesh.quadrature
    if callable(f):
        pts = q.points.reshape(-1, 2)
        fq = np.asarray(f(pts), dtype=float).reshape(q.points.shape)
    else:
        fq = np.broadcast_to(np.asarray(f, dtype=float), q.points.shape)
    loc = np.einsum("cq,qa,cqi->cia", q.weights, q.N, fq)
    return _scatter_vec(space.cell_dofs(), loc.reshape(-1, 18), space.n_dofs)


def tensor_source_load(space, F):
    """Load ``-int F : grad phi`` for a callable ``F(x) -> (m, 2, 2)``."""
    _require_vector(space)
    q = space.mesh.quadrature
    pts = q.points.reshape(-1, 2)
    Fq = np.asarray(F(pts), dtype=float).reshape(q.points.shape[:2] + (2, 2))
    loc = -np.einsum("cq,cqid,cqad->cia", q.weights, Fq, q.grad)
    return _scatter_vec(space.cell_dofs(), loc.reshape(-1, 18), space.n_dofs)


def pressure_mean_vector(space):
    """Vector g with ``g . x = int p`` for the pressure part of ``x``."""
    q = space.mesh.quadrature
    loc = np.einsum("cq,qi->ci", q.weights, q.M)
    g = np.zeros(space.n_dofs)
    np.add.at(g, space.pressure_cell_dofs().ravel(), loc.ravel())
    return g


def saddle_matrix(space, A):
    """Assemble [[A, -B^T], [-B, 0]] in the mixed space from a velocity matrix A."""
    B = assemble_divergence_coupling(space)
    nv = space.n_velocity
    A = A.tocsr()[:nv, :nv]
    return sp.bmat([[A, -B.T], [-B, None]], format="csr")


# ---------------------------------------------------------------------------
# constrained linear systems
# ---------------------------------------------------------------------------

class SparseFactor:
    """LU factorization tuned for symmetric-pattern (saddle-point) matrices.

    A minimum-degree ordering on A^T + A with diagonal pivoting keeps the
    fill small; if the result is inaccurate the default column ordering
    with partial pivoting is used instead.
    """

    def __init__(self, matrix, rtol=1e-9):
        self.matrix = sp.csc_matrix(matrix)
        self.rtol = rtol
        self._lu = None
        self._robust = False
        try:
            self._lu = spla.splu(self.matrix, permc_spec="MMD_AT_PLUS_A",
                                 diag_pivot_thresh=1e-3, options={"SymmetricMode": True})
        except RuntimeError:
            self._fallback()

    def _fallback(self):
        self._lu = spla.splu(self.matrix)
        self._robust = True

    def solve(self, rhs):
        x = self._lu.solve(rhs)
        r = rhs - self.matrix @ x
        x = x + self._lu.solve(r)           # one step of iterative refinement
        scale = max(np.linalg.norm(rhs), 1e-300)
        if not self._robust and np.linalg.norm(rhs - self.matrix @ x) > self.rtol * scale:
            self._fallback()
            return self.solve(rhs)
        return x


def sparse_solve(matrix, rhs):
    return SparseFactor(matrix).solve(rhs)


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Linear system with strongly imposed constraints.

    ``fixed``/``values`` refer to the (possibly rotated) unknowns, which
    relate to cartesian dofs through ``transform`` (``x = T y``).
    """

    matrix: sp.csr_matrix
    rhs: np.ndarray
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    transform: Optional[sp.csr_matrix] = None
    gauge: Optional[np.ndarray] = None

    @property
    def size(self):
        return self.matrix.shape[0]

    def free(self):
        mask = np.ones(self.size, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    def rotated(self):
        if self.transform is None:
            return self.matrix.tocsr(), self.rhs
        T = self.transform
        return (T.T @ self.matrix @ T).tocsr(), T.T @ self.rhs

    def reduced(self):
        """Matrix and right-hand side on the free unknowns (constraints eliminated)."""
        K, r = self.rotated()
        free = self.free()
        y = np.zeros(self.size)
        y[self.fixed] = self.values
        r = r - K @ y
        return K[free][:, free], r[free]


def apply_dirichlet(system, dofs, values):
    dofs = np.asarray(dofs, dtype=int)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    keep = ~np.isin(system.fixed, dofs)
    return replace(system, fixed=np.concatenate([system.fixed[keep], dofs]),
                   values=np.concatenate([system.values[keep], values]))


def apply_normal_constraint(system, mesh):
    """Rotate wall velocity dofs into the (n, tau) frame and fix u.n = 0.

    Points already carrying a Dirichlet constraint keep cartesian dofs.
    """
    space = Space(mesh, Family.MIXED_Q2Q1 if system.size > 2 * mesh.n_points
                  else Family.VECTOR_Q2)
    fixed_pts = np.unique(system.fixed[system.fixed < space.n_velocity] // 2)
    T, normal = space.rotation(skip_points=fixed_pts)
    return replace(apply_dirichlet(system, normal, 0.0), transform=T)


def solve_system(system, return_reduced=False):
    """Solve with constraint elimination and an optional mean-zero gauge."""
    Kff, rf = system.reduced()
    free = system.free()
    if system.gauge is not None:
        g = system.gauge if system.transform is None else system.transform.T @ system.gauge
        gf = sp.csr_matrix(g[free][None, :])
        Kff = sp.bmat([[Kff, gf.T], [gf, None]], format="csc")
        rf = np.append(rf, 0.0)
    yf = sparse_solve(Kff, rf)
    y = np.zeros(system.size)
    y[system.fixed] = system.values
    y[free] = yf[: free.size]
    x = y if system.transform is None else system.transform @ y
    return x
