"""Steady Navier-Stokes in a truncated distorted strip, solved for the deficit v = u - a.

With ``u = v + a_h`` and the shifted pressure ``P = p + flux * x2 / C_P``
(bounded in the outlets), the discrete residual against a velocity test
``phi`` (zero on the artificial ends, ``phi.n = 0`` on walls) reads

    2 int Su:Sphi + alpha int_wall u_tau phi_tau + int (u.grad u).phi
        - int P div phi - (flux / C_P) int phi_2,

and the continuity residual is ``-int q div u``.  Picard steps (frozen
advection) warm up Newton's method.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from .errors import ContractViolation, NonFiniteResidualError
from .fem import (AssembledSystem, Family, Field, SparseFactor, Space, apply_dirichlet,
                  apply_normal_constraint, assemble_convection, assemble_divergence_coupling,
                  assemble_reaction, assemble_slip_boundary_form, assemble_stress_form,
                  assemble_vector_laplacian, convection_vector, interpolate, mass_matrix,
                  pressure_mean_vector, saddle_matrix, vector_load)
from .mesh import build_strip_mesh

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class NSProblem:
    """Truncated-strip Navier-Stokes problem for a given profile vector.

    ``profile`` is an analytic ProfileVector; its nodal interpolant is the
    discrete background field.  ``end_condition`` is fixed to ``v = 0``.
    """

    mesh: object
    alpha: float
    flux: float
    profile: object
    atol: float = 1e-10
    rtol: float = 1e-12
    max_iter: int = 30
    picard_steps: int = 3
    flux_ceiling: float = 10.0
    end_condition: str = "dirichlet"

    def __post_init__(self):
        if self.flux < 0:
            raise ContractViolation("flux must be non-negative")
        if not (self.atol > 0 and self.rtol > 0):
            raise ContractViolation("tolerances must be positive")
        if self.end_condition != "dirichlet":
            raise ContractViolation("only v = 0 at the artificial ends is supported")
        if abs(self.profile.flux - self.flux) > 1e-14 * max(1.0, self.flux):
            raise ContractViolation("profile vector carries a different flux")

    @property
    def C_P(self):
        return self.profile.C_P_right

    def with_flux(self, flux):
        return replace(self, flux=float(flux), profile=self.profile.scaled(flux))

    def with_tolerances(self, atol=None, rtol=None):
        return replace(self, atol=atol or self.atol, rtol=rtol or self.rtol)


def make_problem(spec, resolution, flux, carrier="bump", bounds=(0.25, 0.75), **kw):
    """Convenience constructor: strip mesh plus reference profile vector."""
    from .profile_vector import reference_profile_vector
    mesh = build_strip_mesh(spec, resolution)
    a = reference_profile_vector(spec, flux, carrier=carrier, bounds=bounds)
    return NSProblem(mesh, spec.alpha, float(flux), a, **kw)


@dataclass(eq=False)
class NSSolution:
    v: Field
    u: Field
    a: Field
    pressure: Field          # shifted pressure P, zero mean
    p: Field                 # physical pressure (linear drift restored)
    Pi: Field                # cut-off based pressure, zero mean
    history: List[dict]
    converged: bool
    flux: float
    problem: Optional[NSProblem] = None
    message: str = ""

    @property
    def residual(self):
        return self.history[-1]["residual"] if self.history else np.inf

    def h1_norm(self, which="v"):
        f = getattr(self, which)
        return h1_norm(f)

    def newton_quadratic(self):
        """Second differences of log-residuals over the final Newton steps (negative = accelerating)."""
        # trailing run of Newton steps, preceded by the residual it started from
        k = len(self.history)
        while k > 0 and self.history[k - 1]["kind"] == "newton":
            k -= 1
        r = [h["residual"] for h in self.history[max(k - 1, 0):] if h["residual"] > 0]
        if len(r) < 3 or k == len(self.history):
            return []
        lg = np.log(np.asarray(r[-4:]))
        return [float(d) for d in np.diff(lg, 2)]


def h1_norm(f):
    V = f.space if f.space.family == Family.VECTOR_Q2 else f.space.velocity_space()
    x = f.values[: V.n_dofs]
    K = _cached(V, "h1", lambda: mass_matrix(V) + assemble_vector_laplacian(V))
    return float(np.sqrt(max(x @ (K @ x), 0.0)))


def _cached(space, key, build):
    cache = space.mesh.__dict__.setdefault("_form_cache", {})
    if key not in cache:
        cache[key] = build()
    return cache[key]


class _Discretization:
    """Assembled flux-independent pieces of a problem."""

    def __init__(self, problem):
        self.problem = problem
        mesh = problem.mesh
        self.W = Space(mesh, Family.MIXED_Q2Q1)
        self.V = self.W.velocity_space()
        nv = self.nv = self.W.n_velocity
        A = assemble_stress_form(self.V) + assemble_slip_boundary_form(self.V, problem.alpha)
        self.A = A.tocsr()
        self.B = assemble_divergence_coupling(self.W).tocsr()
        self.f2 = vector_load(self.V, np.array([0.0, 1.0]))
        ends = mesh.end_points
        template = AssembledSystem(sp.csr_matrix((self.W.n_dofs, self.W.n_dofs)),
                                   np.zeros(self.W.n_dofs))
        template = apply_dirichlet(template, np.concatenate([2 * ends, 2 * ends + 1]), 0.0)
        template = apply_normal_constraint(template, mesh)
        self.T = template.transform
        self.fixed = template.fixed
        self.free = template.free()
        self.gauge = (self.T.T @ pressure_mean_vector(self.W))[self.free]
        self.free_v = self.free[self.free < nv]
        self.free_p = self.free[self.free >= nv]
        Mv = (self.T.T @ _embed(mass_matrix(self.V), self.W.n_dofs) @ self.T).tocsr()
        self.Mv = SparseFactor(Mv[self.free_v][:, self.free_v])
        Mp = mass_matrix(Space(mesh, Family.SCALAR_Q1))
        self.pmass = np.asarray(Mp.sum(axis=1)).ravel()
        self.Mp = SparseFactor(Mp)
        self.a_h = problem.profile.interpolate(mesh)

    def residual(self, x, flux, C_P):
        """Full residual vector (cartesian dofs) of the nonlinear system."""
        nv = self.nv
        u = x[:nv] + self.a_h.values
        P = x[nv:]
        Rv = self.A @ u + convection_vector(self.V, u, u) - self.B.T @ P - (flux / C_P) * self.f2
        Rp = -(self.B @ u)
        return np.concatenate([Rv, Rp])

    def dual_norm(self, R):
        """Mass-matrix dual norm of the residual restricted to the free unknowns."""
        Rr = self.T.T @ R
        rv = Rr[self.free_v]
        rp = Rr[self.nv:]
        # the gauge multiplier absorbs the constant-pressure mode; since
        # M_p^{-1} (M_p 1) = 1 its optimal weight is sum(rp) / sum(m)
        rp = rp - (rp.sum() / self.pmass.sum()) * self.pmass
        return float(np.sqrt(max(rv @ self.Mv.solve(rv), 0.0) + max(rp @ self.Mp.solve(rp), 0.0)))

    def jacobian(self, x, newton=True):
        u = x[: self.nv] + self.a_h.values
        J = self.A + assemble_convection(self.V, u)
        if newton:
            J = J + assemble_reaction(self.V, u)
        return saddle_matrix(self.W, J)

    def step(self, J, R):
        """Solve J d = -R with constrained dofs held at zero and the pressure gauge."""
        K = (self.T.T @ J @ self.T).tocsr()
        r = -(self.T.T @ R)
        free = self.free
        Kff = K[free][:, free]
        g = sp.csr_matrix(self.gauge[None, :])
        M = sp.bmat([[Kff, g.T], [g, None]], format="csc")
        rhs = np.append(r[free], 0.0)
        y = np.zeros(K.shape[0])
        y[free] = SparseFactor(M).solve(rhs)[: free.size]
        return self.T @ y

    def project_start(self, v):
        """Impose v = 0 at the ends and v.n = 0 on walls for a start vector."""
        y = self.T.T @ np.concatenate([v, np.zeros(self.W.n_pressure)])
        y[self.fixed] = 0.0
        return (self.T @ y)[: self.nv]


def _embed(A, n):
    A = A.tocoo()
    return sp.coo_matrix((A.data, (A.row, A.col)), shape=(n, n)).tocsr()


def _discretization(problem):
    # the flux-independent assembly is reused across continuation steps
    key = ("ns", problem.alpha, id(problem.profile.eta), problem.profile.carrier.__class__,
           getattr(problem.profile.carrier, "lo", None), getattr(problem.profile.carrier, "hi", None))
    cache = problem.mesh.__dict__.setdefault("_form_cache", {})
    disc = cache.get(key)
    if disc is None or disc.problem.profile.flux != problem.profile.flux:
        if disc is None:
            disc = _Discretization(problem)
        else:
            disc.problem = problem
            disc.a_h = problem.profile.interpolate(problem.mesh)
        cache[key] = disc
    return disc


def solve_ns(problem, initial_guess=None, raise_on_failure=False):
    """Picard-then-Newton solve; returns an NSSolution (``converged`` flags success).

    ``initial_guess`` is a deficit velocity (Field or dof vector) or None for zero.
    """
    if problem.flux > problem.flux_ceiling:
        raise ContractViolation(
            f"flux {problem.flux} above the configured ceiling {problem.flux_ceiling}")
    disc = _discretization(problem)
    nv = disc.nv
    x = np.zeros(disc.W.n_dofs)
    if initial_guess is not None:
        v0 = initial_guess.values[:nv] if isinstance(initial_guess, Field) else np.asarray(
            initial_guess, dtype=float)[:nv]
        x[:nv] = disc.project_start(v0)
    flux, C_P = problem.flux, problem.C_P
    R = disc.residual(x, flux, C_P)
    r0 = disc.dual_norm(R)
    history = [{"iter": 0, "kind": "start", "residual": r0, "step": 0.0}]
    tol = max(problem.atol, problem.rtol * r0)
    converged = r0 <= tol
    picard_left = problem.picard_steps
    message = ""
    it = 0
    while not converged and it < problem.max_iter:
        it += 1
        newton = picard_left <= 0
        J = disc.jacobian(x, newton=newton)
        d = disc.step(J, R)
        lam, r_old = 1.0, history[-1]["residual"]
        while True:
            xn = x + lam * d
            Rn = disc.residual(xn, flux, C_P)
            rn = disc.dual_norm(Rn)
            if not np.isfinite(rn):
                raise NonFiniteResidualError(f"non-finite residual at iteration {it}",
                                             history=history)
            if not newton or rn < r_old or lam < 0.2:
                break
            lam *= 0.5
        kind = "newton" if newton else "picard"
        if newton and rn >= r_old:
            # stagnation: fall back to frozen-advection steps
            kind = "newton-stagnated"
            picard_left = problem.picard_steps
            message = "Newton stagnated; fell back to Picard"
            log.info("newton stagnated at iteration %d (residual %.3e)", it, rn)
        else:
            picard_left -= 1
        x, R = xn, Rn
        history.append({"iter": it, "kind": kind, "residual": rn,
                        "step": float(lam * np.linalg.norm(d[:nv]))})
        log.debug("iteration %d %s residual %.3e", it, kind, rn)
        converged = rn <= tol
    if not converged:
        message = message or f"no convergence within {problem.max_iter} iterations"
        if raise_on_failure:
            raise RuntimeError(message)
    return _package(problem, disc, x, history, converged, message)


def _package(problem, disc, x, history, converged, message):
    nv = disc.nv
    mesh = problem.mesh
    V = disc.V
    v = Field(V, x[:nv].copy(), "v")
    a = disc.a_h
    u = Field(V, x[:nv] + a.values, "u")
    Q = Space(mesh, Family.SCALAR_Q1)
    ones = pressure_mean_vector(disc.W)[nv:]
    area = ones.sum()
    P = x[nv:] - (ones @ x[nv:]) / area
    x2 = mesh.nodes[:, 1]
    flux, C_P = problem.flux, problem.C_P
    p = P - flux * x2 / C_P
    eta = problem.profile.eta
    Pi = (p + flux * eta.integral(x2) / problem.profile.C_P_right
          - flux * eta.integral(-x2) / problem.profile.C_P_left)
    Pi = Pi - (ones @ Pi) / area
    return NSSolution(v, u, a, Field(Q, P, "P"), Field(Q, p, "p"), Field(Q, Pi, "Pi"),
                      history, bool(converged), float(problem.flux), problem, message)


# ---------------------------------------------------------------------------
# continuation and multi-start experiments
# ---------------------------------------------------------------------------

@dataclass
class SweepResult:
    solutions: list
    fluxes: list
    reached: float
    failures: list = field(default_factory=list)


def continuation_sweep(problem, fluxes):
    """Solve for ascending fluxes, warm-starting each step from the previous deficit."""
    fluxes = [float(f) for f in fluxes]
    if any(b <= a for a, b in zip(fluxes, fluxes[1:])):
        raise ContractViolation("flux list must be strictly ascending")
    sols, failures = [], []
    reached = 0.0
    prev = None
    for k, f in enumerate(fluxes):
        prob = problem.with_flux(f)
        guess = None
        if prev is not None and prev.flux > 0:
            guess = prev.v.values * (f / prev.flux)
        try:
            sol = solve_ns(prob, guess)
        except NonFiniteResidualError as exc:
            failures.append({"flux": f, "reason": str(exc), "first_step": k == 0})
            break
        if not sol.converged:
            failures.append({"flux": f, "reason": sol.message, "first_step": k == 0,
                             "history": sol.history})
            break
        sols.append(sol)
        reached = f
        prev = sol
    return SweepResult(sols, fluxes[: len(sols)], reached, failures)


def random_solenoidal_start(mesh, rng, amplitude=1.0, modes=3):
    """Curl of a random stream function supported strictly inside the channel.

    Vanishes (with its gradient) on walls and ends, so the start satisfies
    every strong constraint.
    """
    spec = mesh.spec
    zeta = spec.zeta if spec is not None else float(np.max(np.abs(mesh.points[:, 1])))
    coef = rng.standard_normal((modes, modes))
    L = zeta - 0.5

    def psi_grad(x):
        s, y = x[:, 0], x[:, 1]
        inside = (s > 0) & (s < 1) & (np.abs(y) < L)
        bx = np.where(inside, (s * (1 - s)) ** 2, 0.0)
        dbx = np.where(inside, 2 * s * (1 - s) * (1 - 2 * s), 0.0)
        t = y / L
        by = np.where(inside, (1 - t * t) ** 2, 0.0)
        dby = np.where(inside, -4 * t * (1 - t * t) / L, 0.0)
        f = np.zeros_like(s)
        df1 = np.zeros_like(s)
        df2 = np.zeros_like(s)
        for i in range(modes):
            for j in range(modes):
                c1, s1 = np.cos(np.pi * i * s), np.sin(np.pi * i * s)
                c2, s2 = np.cos(np.pi * j * t), np.sin(np.pi * j * t)
                f += coef[i, j] * c1 * c2
                df1 += coef[i, j] * (-np.pi * i * s1) * c2
                df2 += coef[i, j] * c1 * (-np.pi * j * s2 / L)
        d1 = dbx * by * f + bx * by * df1
        d2 = bx * dby * f + bx * by * df2
        return amplitude * np.stack([d2, -d1], axis=1)

    V = Space(mesh, Family.VECTOR_Q2)
    return interpolate(V, psi_grad, "random").values


@dataclass
class UniquenessReport:
    max_distance: float
    distances: dict
    norms: list
    starts: list
    excluded: list
    solutions: list = field(default_factory=list, repr=False)


def uniqueness_probe(problem, k=3, seed=0, atol=1e-13):
    """Solve from ``k`` distinct starts and report pairwise relative H1 distances."""
    if k < 2:
        raise ContractViolation("need at least two starts")
    rng = np.random.default_rng(seed)
    prob = problem.with_tolerances(atol=atol)
    disc = _discretization(prob)
    a = disc.a_h.values
    starts = [("zero", None), ("profile", 0.5 * a)]
    while len(starts) < k:
        scale = max(problem.flux, 1e-3)
        starts.append((f"random{len(starts) - 1}",
                       random_solenoidal_start(problem.mesh, rng, amplitude=scale)))
    starts = starts[:k]
    sols, names, excluded = [], [], []
    for name, guess in starts:
        try:
            s = solve_ns(prob, guess)
        except NonFiniteResidualError as exc:
            excluded.append({"start": name, "reason": str(exc)})
            continue
        if s.converged:
            sols.append(s)
            names.append(name)
        else:
            excluded.append({"start": name, "reason": s.message})
    norms = [h1_norm(s.v) for s in sols]
    dist = {}
    for i in range(len(sols)):
        for j in range(i + 1, len(sols)):
            d = Field(sols[i].v.space, sols[i].v.values - sols[j].v.values)
            dist[f"{names[i]}|{names[j]}"] = h1_norm(d) / max(norms[i], 1e-14)
    return UniquenessReport(max(dist.values()) if dist else float("nan"), dist, norms, names,
                            excluded, sols)
