"""Manufactured-solution check of the slip Stokes solver.

u = curl psi with psi = sin(pi x1) cos(x2) and p = cos(x1) sin(x2) on a
straight strip; body force and wall traction are computed with sympy.
Taylor-Hood elements should give order 3 for velocity and 2 for pressure in
L2.
"""

# %%
import numpy as np
import sympy as sp

from slipflow import DomainSpec, StokesProblem, build_strip_mesh, solve_stokes

X1, X2 = sp.symbols("x1 x2")
psi = sp.sin(sp.pi * X1) * sp.cos(X2)
u = [sp.diff(psi, X2), -sp.diff(psi, X1)]
p = sp.cos(X1) * sp.sin(X2)
f = [-sp.diff(u[i], X1, 2) - sp.diff(u[i], X2, 2) + sp.diff(p, (X1, X2)[i]) for i in range(2)]
S21 = (sp.diff(u[1], X1) + sp.diff(u[0], X2)) / 2
lam = lambda e: sp.lambdify((X1, X2), e, "numpy")
ue, fe, pe, s21, u2 = [lam(c) for c in u], [lam(c) for c in f], lam(p), lam(S21), lam(u[1])


def vec(fs):
    return lambda x: np.stack([fs[0](x[:, 0], x[:, 1]) + 0 * x[:, 0],
                               fs[1](x[:, 0], x[:, 1]) + 0 * x[:, 0]], axis=1)


def traction(x, alpha=1.0):
    # walls x1 = 0, 1: n = (+-1, 0), tau = (0, +-1)
    n = np.where(x[:, 0] > 0.5, 1.0, -1.0)
    return 2 * s21(x[:, 0], x[:, 1]) + alpha * u2(x[:, 0], x[:, 1]) * n


# %%
prev = None
for n in (2, 4, 8, 16):
    mesh = build_strip_mesh(DomainSpec.straight_strip(2.0, 0.5, 1.0), n)
    uh, ph = solve_stokes(StokesProblem(mesh, 1.0, force=vec(fe), wall_traction=traction,
                                        end_velocity=vec(ue)))
    q = mesh.volume_quadrature(5)
    x = q.points.reshape(-1, 2)
    uq, _ = uh.at_quadrature(q)
    pq, _ = ph.at_quadrature(q)
    eu = np.sqrt(np.sum(q.weights[..., None] * (uq - vec(ue)(x).reshape(uq.shape)) ** 2))
    ep = np.sqrt(np.sum(q.weights * (pq - pe(x[:, 0], x[:, 1]).reshape(pq.shape)) ** 2))
    rates = "" if prev is None else f"  orders {np.log2(prev[0] / eu):.2f} {np.log2(prev[1] / ep):.2f}"
    print(f"n={n:2d} cells={mesh.n_cells:5d}  |u-uh| {eu:.3e}  |p-ph| {ep:.3e}{rates}")
    prev = (eu, ep)
