"""Steady Navier-Stokes flow with Navier-slip walls in pipe-like domains.

Finite-element (Q2-Q1 Taylor-Hood) solvers for slip Poiseuille profiles,
profile vectors, linear Stokes and the nonlinear deficit problem, plus
numerical diagnostics of the identities and decay estimates.
"""

__version__ = "0.1.0"

from .errors import (CompatibilityError, ContractViolation, MeshGenerationError,
                     NonFiniteResidualError, ProfileVectorError, SingularProblemError,
                     WallCrossingError)
from .mesh import (DomainSpec, FacetTag, Mesh, build_cross_section_mesh, build_mesh,
                   build_strip_mesh, bump_wall, flat_wall, reference_bump_strip)
from .fem import Family, Field, Space, interpolate
from .poiseuille import closed_form_reference, flux_constant, poiseuille_profile
from .profile_vector import assemble_profile_vector, reference_profile_vector
from .stokes import StokesProblem, solve_stokes
from .navier_stokes import (NSProblem, continuation_sweep, make_problem, solve_ns,
                            uniqueness_probe)
from .diagnostics import Report, decay_fit, energy_linearity, flux_profile

__all__ = [
    "CompatibilityError", "ContractViolation", "MeshGenerationError",
    "NonFiniteResidualError", "ProfileVectorError", "SingularProblemError",
    "WallCrossingError", "DomainSpec", "FacetTag", "Mesh", "build_cross_section_mesh",
    "build_mesh", "build_strip_mesh", "bump_wall", "flat_wall", "reference_bump_strip",
    "Family", "Field", "Space", "interpolate", "closed_form_reference", "flux_constant",
    "poiseuille_profile", "assemble_profile_vector", "reference_profile_vector",
    "StokesProblem", "solve_stokes", "NSProblem", "continuation_sweep", "make_problem",
    "solve_ns", "uniqueness_probe", "Report", "decay_fit", "energy_linearity", "flux_profile",
]
