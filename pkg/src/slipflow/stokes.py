"""Linear Stokes solver with Navier-slip walls.

Weak form: find (u, p) with u.n = 0 on walls such that

    2 int Su:Sphi + alpha int_wall u_tau phi_tau - int p div phi
        = int f.phi - int F:grad phi + int_wall t phi_tau,
    - int q div u = - int q d,

where ``t`` is tangential traction data (strong form
``2(Su n).tau + alpha u.tau = t``) and ``d`` optional divergence data.
"""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from .errors import ContractViolation, SingularProblemError
from .fem import (AssembledSystem, Family, Field, Space, apply_dirichlet,
                  apply_normal_constraint, assemble_boundary_traction, load_vector,
                  assemble_slip_boundary_form, assemble_stress_form,
                  pressure_mean_vector, saddle_matrix, solve_system,
                  tensor_source_load, vector_load)


@dataclass(frozen=True, eq=False)
class StokesProblem:
    """Data of a slip Stokes problem.

    ``end_condition`` is ``"dirichlet"`` (velocity ``end_velocity`` imposed
    on the inflow/outflow facets, zero by default) or ``"natural"``.
    ``wall_traction`` may be a callable or an array of values at the wall
    facet quadrature points; ``divergence`` a callable or a vector already
    tested against the pressure basis.
    """

    mesh: object
    alpha: float
    force: Optional[Callable] = None
    stress_source: Optional[Callable] = None
    wall_traction: Optional[Callable] = None
    divergence: Optional[Callable] = None
    end_velocity: Optional[Callable] = None
    end_condition: str = "dirichlet"

    def __post_init__(self):
        if self.alpha < 0:
            raise ContractViolation("friction coefficient must be non-negative")
        if self.end_condition not in ("dirichlet", "natural"):
            raise ContractViolation(f"unknown end condition {self.end_condition!r}")

    @property
    def has_ends(self):
        return self.mesh.end_points.size > 0

    @property
    def needs_gauge(self):
        # with every boundary normal velocity prescribed, p is fixed only up to a constant
        return not (self.has_ends and self.end_condition == "natural")


def rigid_kernel_dimension(mesh):
    """Dimension of the rigid motions tangent to every wall node."""
    x, n = mesh.points[mesh.wall_points], mesh.normals
    W = np.stack([n[:, 0], n[:, 1], -x[:, 1] * n[:, 0] + x[:, 0] * n[:, 1]], axis=1)
    s = np.linalg.svd(W, compute_uv=False)
    return int(np.sum(s <= 1e-10 * max(s[0], 1.0)))


def build_system(problem):
    mesh = problem.mesh
    W = Space(mesh, Family.MIXED_Q2Q1)
    nv = W.n_velocity
    A = assemble_stress_form(W)
    if problem.alpha > 0:
        A = A + assemble_slip_boundary_form(W, problem.alpha)
    K = saddle_matrix(W, A)
    rhs = np.zeros(W.n_dofs)
    V = W.velocity_space()
    if problem.force is not None:
        rhs[:nv] += vector_load(V, problem.force)
    if problem.stress_source is not None:
        rhs[:nv] += tensor_source_load(V, problem.stress_source)
    if problem.wall_traction is not None:
        rhs[:nv] += assemble_boundary_traction(V, problem.wall_traction)
    if problem.divergence is not None:
        if isinstance(problem.divergence, np.ndarray):
            # already tested against the pressure basis
            rhs[nv:] -= problem.divergence
        else:
            rhs[nv:] -= load_vector(Space(mesh, Family.SCALAR_Q1), problem.divergence)
    system = AssembledSystem(K, rhs)
    if problem.has_ends and problem.end_condition == "dirichlet":
        pts = mesh.end_points
        if problem.end_velocity is None:
            vals = np.zeros((pts.size, 2))
        else:
            vals = np.asarray(problem.end_velocity(mesh.points[pts]), dtype=float).reshape(-1, 2)
        dofs = np.stack([2 * pts, 2 * pts + 1], axis=1)
        system = apply_dirichlet(system, dofs.ravel(), vals.ravel())
    system = apply_normal_constraint(system, mesh)
    if problem.needs_gauge:
        system = replace(system, gauge=pressure_mean_vector(W))
    return W, system


def residual_norm(system, x):
    """Euclidean norm of the constrained residual on the free unknowns."""
    r = system.matrix @ x - system.rhs
    if system.transform is not None:
        r = system.transform.T @ r
    free = system.free()
    if system.gauge is not None:
        # the multiplier absorbs the component along the gauge direction
        g = system.gauge if system.transform is None else system.transform.T @ system.gauge
        gf = g[free]
        rf = r[free]
        lam = (rf @ gf) / (gf @ gf)
        return float(np.linalg.norm(rf - lam * gf))
    return float(np.linalg.norm(r[free]))


def solve_stokes(problem):
    """Solve the slip Stokes problem; returns (velocity, pressure) fields.

    Raises SingularProblemError when the saddle-point system has a rigid
    kernel (alpha = 0 on a domain admitting a tangential rigid motion).
    """
    mesh = problem.mesh
    if problem.alpha == 0 and not (problem.has_ends and problem.end_condition == "dirichlet"):
        k = rigid_kernel_dimension(mesh)
        if k > 0:
            raise SingularProblemError(
                f"alpha = 0 leaves a {k}-dimensional rigid-motion kernel", kernel_dimension=k)
    W, system = build_system(problem)
    x = solve_system(system)
    res = residual_norm(system, x)
    state = Field(W, x, "stokes", meta={"residual": res})
    u = state.velocity_field("u")
    p = state.pressure_field("p")
    u.meta["residual"] = res
    return u, p


def inf_sup_constant(mesh):
    """Smallest singular value of the pressure Schur complement (dense, small meshes).

    Computed as sqrt(lambda_min) of ``B A^{-1} B^T x = lambda M_p x`` on the
    zero-mean pressure subspace, with A the vector Laplacian plus the
    velocity mass restricted to dofs satisfying u.n = 0.
    """
    import scipy.linalg as sla

    from .fem import assemble_divergence_coupling, assemble_vector_laplacian, mass_matrix
    W = Space(mesh, Family.MIXED_Q2Q1)
    V = W.velocity_space()
    T, normal = V.rotation()
    A = (T.T @ (assemble_vector_laplacian(V) + mass_matrix(V)) @ T).toarray()
    B = (assemble_divergence_coupling(W) @ T).toarray()
    fixed = set(normal.tolist())
    if mesh.end_points.size:
        fixed |= set((2 * mesh.end_points).tolist()) | set((2 * mesh.end_points + 1).tolist())
    free = np.array(sorted(set(range(V.n_dofs)) - fixed))
    A, B = A[np.ix_(free, free)], B[:, free]
    Mp = mass_matrix(Space(mesh, Family.SCALAR_Q1)).toarray()
    S = B @ np.linalg.solve(A, B.T)
    lam = sla.eigh(S, Mp, eigvals_only=True)
    lam = np.sort(lam)
    # the constant pressure is in the kernel of S
    return float(np.sqrt(max(lam[1], 0.0)))
