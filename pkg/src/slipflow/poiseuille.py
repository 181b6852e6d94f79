"""Slip Poiseuille profiles on pipe cross-sections.

The unit-load Robin problem ``-lap phi = 1``, ``d_n phi + alpha phi = 0``
is solved once; every flux is then obtained by scaling,
``g = (flux / C_P) phi`` with ``C_P = int phi``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .fem import (Family, Field, Space, boundary_mass_matrix, load_vector,
                  sparse_solve, stiffness_matrix)
from .mesh import DomainSpec, build_cross_section_mesh

DEFAULT_RESOLUTION = {"interval": 8, "disk": 32, "star": 32}


def solve_robin_poisson(mesh, alpha):
    """Biquadratic (or quadratic in 1D) solution of the unit-load Robin problem."""
    if not alpha > 0:
        raise ContractViolation(f"Robin problem is singular for alpha = {alpha}; need alpha > 0")
    V = Space(mesh, Family.SCALAR_Q2)
    K = stiffness_matrix(V) + alpha * boundary_mass_matrix(V)
    b = load_vector(V, 1.0)
    phi = sparse_solve(K, b)
    return Field(V, phi, "phi", meta={"alpha": float(alpha)})


@dataclass(frozen=True)
class FluxConstant:
    value: float
    energy: float
    rel_gap: float
    ok: bool

    def __float__(self):
        return self.value


def flux_constant(phi, alpha=None, rtol=1e-10):
    """``C_P = int phi`` together with its energy form ``int |grad phi|^2 + alpha int phi^2``.

    The two must agree for the discrete Robin solution; ``ok`` flags the
    comparison against ``rtol``.
    """
    alpha = phi.meta.get("alpha") if alpha is None else alpha
    if alpha is None:
        raise ContractViolation("friction coefficient unknown for this field")
    V = phi.space
    K = stiffness_matrix(V)
    Mb = boundary_mass_matrix(V)
    value = float(load_vector(V, 1.0) @ phi.values)
    energy = float(phi.values @ (K @ phi.values) + alpha * phi.values @ (Mb @ phi.values))
    gap = abs(value - energy) / max(abs(value), 1e-300)
    return FluxConstant(value, energy, gap, gap <= rtol)


@dataclass(frozen=True, eq=False)
class PoiseuilleProfile:
    spec: DomainSpec
    alpha: float
    flux: float
    mesh: object
    phi: Field
    profile: Field
    C_P: float
    pressure_gradient: float
    energy_check: FluxConstant

    def __call__(self, x):
        """Evaluate g at cross-section points (1D: array of x1 values)."""
        x = np.asarray(x, dtype=float)
        if self.mesh.dim == 1:
            return self.profile.evaluate(x.reshape(-1)).reshape(x.shape)
        return self.profile.evaluate(x)

    def flux_integral(self):
        return float(load_vector(self.profile.space, 1.0) @ self.profile.values)

    def h1_norm(self):
        V = self.profile.space
        from .fem import mass_matrix
        g = self.profile.values
        return float(np.sqrt(g @ (mass_matrix(V) @ g) + g @ (stiffness_matrix(V) @ g)))

    def scaled(self, flux):
        """Same cross-section, different flux (exact by linearity)."""
        if flux < 0:
            raise ContractViolation("flux must be non-negative")
        g = Field(self.phi.space, flux / self.C_P * self.phi.values, "g")
        return PoiseuilleProfile(self.spec, self.alpha, float(flux), self.mesh, self.phi, g,
                                 self.C_P, -flux / self.C_P, self.energy_check)


def _cross_section(spec):
    if spec.kind == "strip":
        # outlets of the strip have unit width
        return DomainSpec.interval(1.0, spec.alpha)
    return spec


def poiseuille_profile(spec, alpha=None, flux=1.0, resolution=None, mesh=None):
    """Slip Poiseuille profile ``g`` with ``int g = flux`` on a cross-section.

    A strip spec is mapped to its unit-width outlet section.
    """
    if flux < 0:
        raise ContractViolation("flux must be non-negative (flip the axis for reverse flow)")
    section = _cross_section(spec)
    alpha = section.alpha if alpha is None else float(alpha)
    if mesh is None:
        res = resolution or DEFAULT_RESOLUTION[section.kind]
        mesh = build_cross_section_mesh(section, res)
    phi = solve_robin_poisson(mesh, alpha)
    check = flux_constant(phi, alpha)
    C_P = check.value
    g = Field(phi.space, flux / C_P * phi.values, "g")
    return PoiseuilleProfile(section, alpha, float(flux), mesh, phi, g, C_P, -flux / C_P, check)


@dataclass(frozen=True)
class ClosedFormProfile:
    kind: str
    alpha: float
    flux: float
    size: float
    C_P: float

    @property
    def pressure_gradient(self):
        return -self.flux / self.C_P

    def phi(self, x):
        a, s = self.alpha, self.size
        x = np.asarray(x, dtype=float)
        if self.kind == "interval":
            x1 = x[..., 0] if x.ndim > 1 else x
            return (x1 * s - x1 * x1) / 2 + s / (2 * a)
        r2 = np.sum(x * x, axis=-1)
        return (s * s - r2) / 4 + s / (2 * a)

    def __call__(self, x):
        return self.flux / self.C_P * self.phi(x)

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        c = self.flux / self.C_P
        if self.kind == "interval":
            x1 = x[..., 0] if x.ndim > 1 else x
            return c * (self.size - 2 * x1) / 2
        return -c * x / 2


def closed_form_reference(spec, alpha=None, flux=1.0):
    """Exact slip Poiseuille profile on an interval (strip section) or a disk."""
    section = _cross_section(spec)
    a = section.alpha if alpha is None else float(alpha)
    if not a > 0:
        raise ContractViolation("alpha must be positive")
    if section.kind == "interval":
        L = section.length
        return ClosedFormProfile("interval", a, float(flux), L, L**3 / 12 + L * L / (2 * a))
    if section.kind == "disk":
        R = section.radius
        return ClosedFormProfile("disk", a, float(flux), R,
                                 np.pi * R**4 / 8 + np.pi * R**3 / (2 * a))
    raise ContractViolation(f"no closed form for a {section.kind!r} cross-section")


def l2_error(profile, reference, relative=True, order=5):
    """L2 distance between a discrete profile and an exact evaluator."""
    mesh = profile.mesh
    q = mesh.volume_quadrature(order)
    gh, _ = profile.profile.at_quadrature(q)
    ge = reference(q.points)
    err = np.sqrt(np.sum(q.weights * (gh - ge) ** 2))
    if relative:
        return float(err / np.sqrt(np.sum(q.weights * ge**2)))
    return float(err)


def robin_residual(profile):
    """Max over wall facet points of |d_n g + alpha g| for the discrete profile."""
    fq = profile.mesh.facet_quadrature
    val, grad = profile.profile.at_facets(fq)
    dn = np.sum(grad * fq.normals, axis=-1)
    return float(np.max(np.abs(dn + profile.alpha * val)))
