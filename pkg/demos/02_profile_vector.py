"""The profile vector of a bump strip.

A strip whose upper wall bulges outward near the origin joins two straight
outlets.  The profile vector ``a`` is divergence free, satisfies the slip
condition, carries the prescribed flux through every section and equals the
Poiseuille flow in both outlets.  Navier-Stokes is then solved for the
deficit ``v = u - a``.
"""

# %%
import numpy as np

from slipflow import build_strip_mesh, reference_bump_strip, reference_profile_vector

spec = reference_bump_strip(alpha=1.0, zeta=6.0, Z=2.0, amplitude=0.3)
a = reference_profile_vector(spec, flux=1e-2)

# %% [markdown]
# Flux through sections, and the divergence at random interior points.

# %%
x2 = np.linspace(-spec.zeta, spec.zeta, 13)
for t, f in zip(x2, a.section_flux(x2)):
    print(f"x2 = {t:5.1f}: flux {f:.16f}")
rng = np.random.default_rng(0)
s, t = rng.uniform(0, 1, 5000), rng.uniform(-spec.zeta, spec.zeta, 5000)
pts = np.stack([s * spec.upper(t), t], 1)
print("max |div a| =", np.abs(a.divergence(pts)).max())

# %% [markdown]
# Over the bump the field is the axial carrier flow h(x1) e2, supported in
# the middle of the channel and blind to the wall shape.  In the transition
# Z/2 < |x2| < Z a cutoff blends it into Poiseuille flow, which needs a
# transverse component.  In the outlets the nodal interpolant coincides with
# the Poiseuille values bit for bit.

# %%
mesh = build_strip_mesh(spec, 8)
ah = a.interpolate(mesh).velocity()
out = np.abs(mesh.points[:, 1]) >= spec.Z
print("outlet dofs equal Poiseuille:",
      np.array_equal(ah[out, 1], a.g_right(mesh.points[out, 0])) and not ah[out, 0].any())
ax = np.abs(mesh.points[:, 1])
for lo, hi, name in ((0.0, spec.Z / 2, "bump"), (spec.Z / 2, spec.Z, "transition")):
    sel = (ax > lo) & (ax < hi)
    print(f"{name:10s} region: max |a_1| = {np.abs(ah[sel, 0]).max():.3e}")
