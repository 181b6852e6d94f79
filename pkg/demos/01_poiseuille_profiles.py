"""Slip Poiseuille profiles on three cross-sections.

The axial velocity of the straight-pipe flow solves a Poisson problem with
a Robin condition on the wall.  We solve it on an interval (channel), the
unit disk and a three-lobed star, and compare with the closed forms where
they exist.

Run with ``python demos/01_poiseuille_profiles.py``.
"""

# %%
import numpy as np

from slipflow import DomainSpec, closed_form_reference, poiseuille_profile
from slipflow.mesh import default_star
from slipflow.poiseuille import l2_error

# %% [markdown]
# Interval of unit width with alpha = 1 and unit flux.  Quadratic elements
# reproduce the parabola exactly, so the nodal error sits at roundoff.

# %%
sec = DomainSpec.interval(1.0, 1.0)
prof = poiseuille_profile(sec, flux=1.0, resolution=8)
exact = closed_form_reference(sec, 1.0, 1.0)
x = prof.mesh.points[:, 0]
print("interval: C_P = %.15f (exact %.15f)" % (prof.C_P, exact.C_P))
print("          g(1/2) = %.15f, g(0) = %.15f" % (exact(np.array([0.5]))[0], exact(np.array([0.0]))[0]))
print("          nodal max error %.2e" % np.abs(prof.profile.values - exact(x)).max())

# %% [markdown]
# The friction coefficient interpolates between perfect slip (flat profile)
# and no slip (parabola vanishing on the walls).

# %%
for alpha in (0.01, 0.1, 1.0, 10.0, 1000.0):
    p = poiseuille_profile(DomainSpec.interval(1.0, alpha), flux=1.0, resolution=8)
    g = p.profile.values
    print(f"alpha = {alpha:8g}: wall/centre velocity ratio {g[np.argmin(x)] / g.max():.4f}")

# %% [markdown]
# Unit disk: refinement study against the closed form.

# %%
disk = DomainSpec.disk(1.0, 1.0)
ref = closed_form_reference(disk, 1.0, 1.0)
errs = []
for n in (8, 16, 32, 64):
    errs.append(l2_error(poiseuille_profile(disk, flux=1.0, resolution=n), ref))
for n, e0, e1 in zip((16, 32, 64), errs, errs[1:]):
    print(f"disk n={n:3d}: L2 relative error {e1:.3e}, order {np.log2(e0 / e1):.2f}")
print("disk C_P = %.12f, 5 pi / 8 = %.12f" % (poiseuille_profile(disk, resolution=64).C_P,
                                              5 * np.pi / 8))

# %% [markdown]
# A star-shaped section has no closed form; the energy identity still holds
# to roundoff.

# %%
star = poiseuille_profile(default_star(1.0), flux=1.0, resolution=32)
print(f"star: C_P = {star.C_P:.6f}, energy identity relative gap "
      f"{star.energy_check.rel_gap:.1e}")
