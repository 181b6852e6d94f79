"""Outlet decay of the deficit and the integral identities behind the theory.

The tail energy G(z) of |grad v|^2 beyond the station z decays
exponentially.  We fit the rate on two truncation lengths, then check the
Payne identity, the Poincare ratio of sin(pi x1) and the Korn-type ratio
that controls coercivity.
"""

# %%
import numpy as np

from slipflow.diagnostics import (decay_fit, default_stations, korn_combined_ratio,
                                  payne_residual, poincare_ratio)
from slipflow.fem import Family, Space, interpolate
from slipflow.mesh import DomainSpec, build_strip_mesh, reference_bump_strip
from slipflow.navier_stokes import make_problem, solve_ns

spec = reference_bump_strip()
stations = default_stations(spec.Z, spec.zeta)
fits = {}
for zeta in (spec.zeta, 2 * spec.zeta):
    s = reference_bump_strip(zeta=zeta)
    sol = solve_ns(make_problem(s, 8, 1e-2))
    fits[zeta] = decay_fit(sol.v, stations=stations)
    f = fits[zeta]
    print(f"zeta = {zeta:4g}: sigma = {f.sigma:.4f}, R2 = {f.r2:.5f}, "
          f"pointwise sigma = {f.pointwise['sigma']:.4f}")
for z, g in zip(stations, fits[spec.zeta].G):
    print(f"  G({z:3.1f}) = {g:.3e}")
print("stations dropped as roundoff:", fits[spec.zeta].dropped)

# %% [markdown]
# Identities.  The Payne integral vanishes for any field tangent to the
# walls; the discrete solution satisfies it up to discretization error.

# %%
print("Payne residual of u:", payne_residual(sol.u))
strip = build_strip_mesh(DomainSpec.straight_strip(3.0, 1.0, 1.0), 8)
w = interpolate(Space(strip, Family.SCALAR_Q2), lambda x: np.sin(np.pi * x[:, 0]))
print("Poincare ratio of sin(pi x1): %.8f (1/pi = %.8f)" % (poincare_ratio(w).ratio, 1 / np.pi))
print("Korn-type ratio of the deficit: %.5f" % korn_combined_ratio(sol.v, spec.alpha))
