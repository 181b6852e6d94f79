"""Divergence-free background field matching Poiseuille flow at both outlets.

Strip variant: with the outlets ``x1 in [0, 1]``, cut-off ``eta`` on
``[Z/2, Z]`` and a flux carrier ``h`` supported inside the section,

    a = (A_R(x1) eta'(x2) - A_L(x1) eta'(-x2),
         h + (g_R - h) eta(x2) + (g_L - h) eta(-x2)),
    A_i(x1) = int_0^x1 (h - g_i),

is exactly solenoidal.  Cross-section variant: ``A`` with
``div A = h - g`` and the slip condition, from a Neumann problem plus a
slip-Stokes correction.
"""

from dataclasses import dataclass
import numpy as np

from . import reference as ref
from .errors import CompatibilityError, ContractViolation, ProfileVectorError
from .fem import (AssembledSystem, Family, Field, Space, apply_normal_constraint,
                  assemble_div_curl_form, divergence_load, interpolate, load_vector,
                  solve_system, stiffness_matrix)
from .mesh import FacetTag
from .poiseuille import closed_form_reference

# composite Gauss rule used for integrals of the smooth carrier
_PANELS = 16
_GL_T, _GL_W = ref.gauss_legendre(24)


def _composite_integral(f, a, b, panels=_PANELS):
    """Integral of ``f`` over [a, b] (arrays of equal shape) by panelled Gauss-Legendre."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    edges = a[..., None] + (b - a)[..., None] * np.linspace(0.0, 1.0, panels + 1)
    lo, hi = edges[..., :-1], edges[..., 1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    x = mid[..., None] + half[..., None] * _GL_T
    return np.sum(half[..., None] * _GL_W * f(x), axis=(-2, -1))


def _bump(t):
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    s = np.where(inside, 1.0 - t * t, 1.0)
    return np.where(inside, np.exp(-1.0 / s), 0.0)


def _bump_d1(t):
    t = np.asarray(t, dtype=float)
    inside = np.abs(t) < 1.0
    s = np.where(inside, 1.0 - t * t, 1.0)
    return np.where(inside, np.exp(-1.0 / s) * (-2.0 * t / (s * s)), 0.0)


@dataclass(frozen=True)
class CutoffEta:
    """Quintic smoothstep, 0 below Z/2 and 1 above Z (C2)."""

    Z: float

    def _t(self, x):
        return np.clip((np.asarray(x, dtype=float) - 0.5 * self.Z) / (0.5 * self.Z), 0.0, 1.0)

    def __call__(self, x):
        t = self._t(x)
        return t**3 * (10.0 - 15.0 * t + 6.0 * t * t)

    def d1(self, x):
        t = self._t(x)
        return 30.0 * t * t * (1.0 - t) ** 2 / (0.5 * self.Z)

    def d2(self, x):
        t = self._t(x)
        return 60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / (0.5 * self.Z) ** 2

    def integral(self, x):
        """``int_{-inf}^x eta``."""
        x = np.asarray(x, dtype=float)
        t = self._t(x)
        c = 0.5 * self.Z
        part = c * (t**4 * (2.5 - 3.0 * t + t * t))
        return np.where(x > self.Z, c * 0.5 + (x - self.Z), part)


@dataclass(frozen=True)
class FluxCarrier:
    """Normalized smooth bump ``h`` on ``[lo, hi]`` with ``int h = flux``."""

    lo: float
    hi: float
    flux: float
    norm: float

    def _t(self, x):
        return (2.0 * np.asarray(x, dtype=float) - self.lo - self.hi) / (self.hi - self.lo)

    def __call__(self, x):
        return self.flux / self.norm * _bump(self._t(x))

    def derivative(self, x):
        return self.flux / self.norm * _bump_d1(self._t(x)) * 2.0 / (self.hi - self.lo)

    def antiderivative(self, x):
        x = np.clip(np.asarray(x, dtype=float), self.lo, self.hi)
        return _composite_integral(self, np.full_like(x, self.lo), x)

    def scaled(self, flux):
        return FluxCarrier(self.lo, self.hi, float(flux), self.norm)


def build_flux_carrier(bounds=(0.25, 0.75), flux=1.0, width=1.0):
    lo, hi = float(bounds[0]), float(bounds[1])
    if not (0.0 < lo < hi < width):
        raise ContractViolation(f"carrier support [{lo}, {hi}] must lie strictly inside (0, {width})")
    if flux < 0:
        raise ContractViolation("flux must be non-negative")
    half = 0.5 * (hi - lo)
    norm = float(half * _composite_integral(_bump, np.array(-1.0), np.array(1.0), panels=64))
    return FluxCarrier(lo, hi, float(flux), norm)


@dataclass(frozen=True)
class PoiseuilleCarrier:
    """Carrier equal to the Poiseuille profile itself (then A = 0)."""

    profile: object

    @property
    def flux(self):
        return self.profile.flux

    def __call__(self, x):
        return self.profile(np.asarray(x, dtype=float))

    def derivative(self, x):
        return self.profile.gradient(np.asarray(x, dtype=float))

    def antiderivative(self, x):
        return _poiseuille_antiderivative(self.profile, x)


def _poiseuille_antiderivative(g, x):
    """``int_0^x g`` for a closed-form interval profile."""
    x = np.asarray(x, dtype=float)
    c, L, a = g.flux / g.C_P, g.size, g.alpha
    return c * (L * x * x / 4 - x**3 / 6 + L * x / (2 * a))


@dataclass(frozen=True)
class DivergenceSolution1D:
    """``A(x1) = int_0^x1 (h - g)`` with A(0) = A(1) = 0."""

    carrier: object
    profile: object
    endpoint_residual: float

    def __call__(self, x):
        return self.carrier.antiderivative(x) - _poiseuille_antiderivative(self.profile, x)

    def derivative(self, x):
        return self.carrier(x) - self.profile(x)

    def second_derivative(self, x):
        return self.carrier.derivative(x) - self.profile.gradient(x)


def solve_divergence_1d(carrier, profile, tol=1e-12):
    """Integrate ``A' = h - g`` on the unit section; rejects a nonzero mean."""
    L = profile.size
    residual = float(carrier.antiderivative(np.array(L)) - _poiseuille_antiderivative(profile, L))
    if abs(residual) > tol * max(1.0, abs(profile.flux)):
        raise CompatibilityError(f"h - g has nonzero mean {residual:.3e}", residual=residual)
    return DivergenceSolution1D(carrier, profile, residual)


@dataclass(frozen=True, eq=False)
class ProfileVector:
    """Analytic profile vector of a distorted strip (see module docstring)."""

    spec: object
    flux: float
    eta: CutoffEta
    carrier: object
    g_left: object
    g_right: object
    A_left: DivergenceSolution1D
    A_right: DivergenceSolution1D

    @property
    def Z(self):
        return self.eta.Z

    @property
    def C_P_left(self):
        return self.g_left.C_P

    @property
    def C_P_right(self):
        return self.g_right.C_P

    def evaluate(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x1, x2 = x[:, 0], x[:, 1]
        e, em = self.eta(x2), self.eta(-x2)
        d, dm = self.eta.d1(x2), self.eta.d1(-x2)
        out = np.zeros_like(x)
        # A_i vanishes identically away from the transition, so only evaluate where needed
        active = (d != 0.0) | (dm != 0.0)
        if np.any(active):
            xa = x1[active]
            out[active, 0] = self.A_right(xa) * d[active] - self.A_left(xa) * dm[active]
        h = self.carrier(x1)
        gl = np.where(em > 0, self.g_left(x1), 0.0)
        gr = np.where(e > 0, self.g_right(x1), 0.0)
        # (1 - s) h + s g; outside the transition this is g (or h) at dof level
        out[:, 1] = (1.0 - e - em) * h + e * gr + em * gl
        return out

    def gradient(self, x):
        """Array (m, 2, 2) with ``[k, i, d] = d_d a_i``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        x1, x2 = x[:, 0], x[:, 1]
        e, em = self.eta(x2), self.eta(-x2)
        d, dm = self.eta.d1(x2), self.eta.d1(-x2)
        dd, ddm = self.eta.d2(x2), self.eta.d2(-x2)
        G = np.zeros((x.shape[0], 2, 2))
        active = (d != 0.0) | (dm != 0.0) | (dd != 0.0) | (ddm != 0.0)
        if np.any(active):
            xa = x1[active]
            Ar, Al = self.A_right(xa), self.A_left(xa)
            G[active, 0, 0] = (self.A_right.derivative(xa) * d[active]
                               - self.A_left.derivative(xa) * dm[active])
            G[active, 0, 1] = Ar * dd[active] + Al * ddm[active]
        h, dh = self.carrier(x1), self.carrier.derivative(x1)
        gl, gr = self.g_left(x1), self.g_right(x1)
        G[:, 1, 0] = ((1.0 - e - em) * dh + e * self.g_right.gradient(x1)
                      + em * self.g_left.gradient(x1))
        G[:, 1, 1] = d * (gr - h) - dm * (gl - h)
        return G

    def divergence(self, x):
        G = self.gradient(x)
        return G[:, 0, 0] + G[:, 1, 1]

    def section_flux(self, x2):
        """Exact-quadrature flux of the axial component through sections ``x2``."""
        x2 = np.atleast_1d(np.asarray(x2, dtype=float))
        e, em = self.eta(x2), self.eta(-x2)
        t, w = ref.gauss_legendre(3)
        xg = 0.5 * (t + 1.0)
        g_r = 0.5 * np.sum(w * self.g_right(xg))
        g_l = 0.5 * np.sum(w * self.g_left(xg))
        h = float(self.carrier.antiderivative(np.array(self.carrier_upper)))
        return (1.0 - e - em) * h + e * g_r + em * g_l

    @property
    def carrier_upper(self):
        return getattr(self.carrier, "hi", 1.0)

    def interpolate(self, mesh):
        """Nodal biquadratic interpolant ``a_h`` on a strip mesh."""
        V = Space(mesh, Family.VECTOR_Q2)
        return interpolate(V, self.evaluate, name="a")

    def scaled(self, flux):
        """Profile vector for another flux (exact by linearity)."""
        c = self.carrier.scaled(flux) if hasattr(self.carrier, "scaled") else None
        gl = closed_form_reference(self.g_left_spec(), self.g_left.alpha, flux)
        gr = closed_form_reference(self.g_left_spec(), self.g_right.alpha, flux)
        if c is None:
            c = PoiseuilleCarrier(gr)
        return ProfileVector(self.spec, float(flux), self.eta, c, gl, gr,
                             solve_divergence_1d(c, gl), solve_divergence_1d(c, gr))

    def g_left_spec(self):
        from .mesh import DomainSpec
        return DomainSpec.interval(self.g_left.size, self.g_left.alpha)

    def h1_norm(self, mesh, region=None):
        """H1 norm of the analytic field over a strip mesh (optionally a sub-region mask fn)."""
        q = mesh.volume_quadrature(5)
        X = q.points.reshape(-1, 2)
        val = self.evaluate(X)
        G = self.gradient(X)
        dens = np.sum(val**2, axis=1) + np.sum(G**2, axis=(1, 2))
        w = q.weights.reshape(-1)
        if region is not None:
            w = w * region(X)
        return float(np.sqrt(np.sum(w * dens)))


def assemble_profile_vector(spec, g_left, g_right, carrier, eta=None, check=True):
    """Profile vector on a distorted strip from outlet profiles, carrier and cut-off."""
    if spec.kind != "strip":
        raise ContractViolation("profile vector requires a strip domain")
    eta = eta or CutoffEta(spec.Z)
    if abs(g_left.flux - g_right.flux) > 1e-14 * max(1.0, g_left.flux) or \
            abs(carrier.flux - g_left.flux) > 1e-14 * max(1.0, g_left.flux):
        raise ProfileVectorError("outlet profiles and carrier must carry the same flux",
                                 check="flux")
    A_l = solve_divergence_1d(carrier, g_left)
    A_r = solve_divergence_1d(carrier, g_right)
    a = ProfileVector(spec, float(g_left.flux), eta, carrier, g_left, g_right, A_l, A_r)
    if check:
        _check_geometry(a)
    return a


def _check_geometry(a):
    spec = a.spec
    # where eta or its mirror is active the walls must be the straight outlets
    y = np.concatenate([np.linspace(-spec.zeta, -0.5 * a.Z, 400),
                        np.linspace(0.5 * a.Z, spec.zeta, 400)])
    if (np.max(np.abs(spec.lower(y))) > 1e-12 or np.max(np.abs(spec.upper(y) - 1.0)) > 1e-12):
        raise ProfileVectorError("walls must be straight for |x2| >= Z/2 (transition region)",
                                 check="straight_transition")
    lo, hi = getattr(a.carrier, "lo", None), getattr(a.carrier, "hi", None)
    if lo is not None:
        y = np.linspace(-0.5 * a.Z, 0.5 * a.Z, 801)
        if np.max(spec.lower(y)) >= lo or np.min(spec.upper(y)) <= hi:
            raise ProfileVectorError("carrier support leaves the channel", check="carrier_support")
    elif isinstance(a.carrier, PoiseuilleCarrier) and not spec.is_straight:
        # a full-width carrier is only tangential on the flat unit-width walls
        raise ProfileVectorError("the Poiseuille carrier needs straight walls", check="carrier_support")


def reference_profile_vector(spec, flux=1.0, carrier="bump", bounds=(0.25, 0.75)):
    """Profile vector with the default choices (central-half carrier, smoothstep cut-off)."""
    from .mesh import DomainSpec
    section = DomainSpec.interval(1.0, spec.alpha)
    g = closed_form_reference(section, spec.alpha, flux)
    if carrier == "poiseuille":
        c = PoiseuilleCarrier(g)
    elif carrier == "bump":
        c = build_flux_carrier(bounds, flux)
    else:
        raise ContractViolation(f"unknown carrier {carrier!r}")
    return assemble_profile_vector(spec, g, g, c)


# ---------------------------------------------------------------------------
# cross-section variant
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RadialCarrier:
    """Radial bump supported in ``|x - center| < radius`` with ``int h = flux``."""

    radius: float
    flux: float
    norm: float

    def __call__(self, x):
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return self.flux / self.norm * _bump(r / self.radius)


def build_radial_carrier(radius, flux=1.0):
    if radius <= 0:
        raise ContractViolation("carrier radius must be positive")
    norm = 2 * np.pi * radius**2 * float(_composite_integral(lambda s: _bump(s) * s,
                                                             np.array(0.0), np.array(1.0), 64))
    return RadialCarrier(float(radius), float(flux), norm)


@dataclass(eq=False)
class CrossSectionDivergence:
    A: Field
    phi: Field
    w: Field
    G: Field
    mean_removed: float


def _neumann_poisson(mesh, f):
    """Zero-mean solution of ``lap phi = f`` with ``d_n phi = 0`` (f given per quadrature point)."""
    V = Space(mesh, Family.SCALAR_Q2)
    q = mesh.quadrature
    K = stiffness_matrix(V)
    b = np.zeros(V.n_dofs)
    np.add.at(b, mesh.cells_q2.ravel(),
              -np.einsum("cq,cq,qa->ca", q.weights, f, q.N).ravel())
    ones = load_vector(V, 1.0)
    sysm = AssembledSystem(K, b, gauge=ones)
    return Field(V, solve_system(sysm), "phi")


def _traction(field, alpha, fq, sel):
    val, grad = field.at_facets(fq)
    val, grad = val[sel], grad[sel]
    n, t = fq.normals[sel], fq.tangents[sel]
    S = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    return 2 * np.einsum("fqij,fqj,fqi->fq", S, n, t) + alpha * np.sum(val * t, axis=-1)


def solve_divergence_2d(mesh, rhs, alpha, rtol=1e-3):
    """Field ``A = w + G`` with ``div A = rhs`` (weakly, against bilinear tests) and slip walls.

    ``rhs`` is a callable of points or an array at volume quadrature points;
    it must have (near-)zero mean.  ``phi`` is the Neumann potential and
    ``w`` its gradient, computed as the curl-free Q2 field with
    ``div w = rhs`` and ``w.n = 0`` (least squares); ``G`` is the slip-Stokes
    correction cancelling the wall traction of ``w``.
    """
    from .stokes import StokesProblem, solve_stokes
    q = mesh.quadrature
    f = rhs(q.points.reshape(-1, 2)).reshape(q.weights.shape) if callable(rhs) else np.asarray(rhs)
    area = q.weights.sum()
    mean = float(np.sum(q.weights * f) / area)
    scale = float(np.sqrt(np.sum(q.weights * f * f) / area))
    if abs(mean) > rtol * max(scale, 1e-300):
        raise CompatibilityError(f"right-hand side has mean {mean:.3e}", residual=mean)
    f = f - mean
    phi = _neumann_poisson(mesh, f)
    # discrete Helmholtz gradient: div w = f, curl w = 0 in the least-squares sense, w.n = 0
    V = Space(mesh, Family.VECTOR_Q2)
    helm = apply_normal_constraint(
        AssembledSystem(assemble_div_curl_form(V), divergence_load(V, f)), mesh)
    w = Field(V, solve_system(helm), "w")
    # G carries the remaining divergence and cancels the slip traction of w
    W = Space(mesh, Family.MIXED_Q2Q1)
    fq = mesh.facet_quadrature
    sel = fq.select([FacetTag.WALL])
    t = -_traction(w, alpha, fq, sel)
    _, gw = w.at_quadrature()
    divw = gw[..., 0, 0] + gw[..., 1, 1]
    d = np.zeros(W.n_pressure)
    np.add.at(d, mesh.cells.ravel(),
              np.einsum("cq,cq,qi->ci", q.weights, f - divw, q.M).ravel())
    Gf, _ = solve_stokes(StokesProblem(mesh, alpha, wall_traction=t, divergence=d))
    A = Field(V, w.values + Gf.values, "A")
    return CrossSectionDivergence(A, phi, w, Gf, mean)


def solve_divergence_2d_direct(mesh, rhs, alpha):
    """Reference: one slip-Stokes solve with divergence data ``rhs`` and no traction."""
    from .stokes import StokesProblem, solve_stokes
    q = mesh.quadrature
    f = rhs(q.points.reshape(-1, 2)).reshape(q.weights.shape) if callable(rhs) else np.asarray(rhs)
    f = f - np.sum(q.weights * f) / q.weights.sum()
    d = np.zeros(mesh.n_vertices)
    np.add.at(d, mesh.cells.ravel(), np.einsum("cq,cq,qi->ci", q.weights, f, q.M).ravel())
    A, _ = solve_stokes(StokesProblem(mesh, alpha, divergence=d))
    A.name = "A_direct"
    return A


def cross_section_residuals(A, rhs, alpha):
    """L2 divergence residual ``||div A - rhs||`` and wall slip residual of ``A``."""
    mesh = A.mesh
    q = mesh.quadrature
    f = rhs(q.points.reshape(-1, 2)).reshape(q.weights.shape) if callable(rhs) else np.asarray(rhs)
    f = f - np.sum(q.weights * f) / q.weights.sum()
    _, g = A.at_quadrature()
    div = g[..., 0, 0] + g[..., 1, 1]
    div_res = float(np.sqrt(np.sum(q.weights * (div - f) ** 2)))
    fq = mesh.facet_quadrature
    sel = fq.select([FacetTag.WALL])
    tr = _traction(A, alpha, fq, sel)
    slip = float(np.sqrt(np.sum(fq.weights[sel] * tr**2)))
    normal = float(np.max(np.abs(np.sum(A.velocity()[mesh.wall_points] * mesh.normals, axis=1))))
    return {"divergence": div_res, "slip": slip, "normal": normal}
