"""Numerical checks of identities, inequalities, boundary residuals and decay.

All functions are read-only over their inputs; a Report collects named
checks, each with an explicit tolerance.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import reference as ref
from .errors import ContractViolation
from .fem import (Family, Field, Space, assemble_slip_boundary_form, assemble_stress_form,
                  assemble_vector_laplacian)
from .io import jsonable
from .mesh import FacetTag, _facet_quadrature

EPS = np.finfo(float).eps


# ---------------------------------------------------------------------------
# analytic fields
# ---------------------------------------------------------------------------

class AnalyticField:
    """Callable vector field with its gradient, ``grad[k, i, d] = d_d f_i``."""

    def __init__(self, value, gradient):
        self._value, self._gradient = value, gradient

    def evaluate(self, x):
        return np.asarray(self._value(np.atleast_2d(x)), dtype=float)

    def gradient(self, x):
        return np.asarray(self._gradient(np.atleast_2d(x)), dtype=float)


def _volume_data(f, mesh, order=3):
    """Values (nc, nq, c) and gradients (nc, nq, c, 2) of a Field or analytic field."""
    q = mesh.volume_quadrature(order)
    if isinstance(f, Field):
        return q, f.at_quadrature(q)
    X = q.points.reshape(-1, 2)
    val = f.evaluate(X).reshape(q.points.shape)
    grad = f.gradient(X).reshape(q.points.shape + (2,))
    return q, (val, grad)


def _wall_normal_trace(f, mesh):
    x = mesh.points[mesh.wall_points]
    val = f.velocity()[mesh.wall_points] if isinstance(f, Field) else f.evaluate(x)
    return np.abs(np.sum(val * mesh.normals, axis=1))


# ---------------------------------------------------------------------------
# flux through sections
# ---------------------------------------------------------------------------

@dataclass
class FluxProfile:
    stations: np.ndarray
    flux: np.ndarray
    reference: float
    max_drift: float


def _strip_rows(mesh):
    st = mesh.structure
    if st.get("kind") != "strip":
        raise ContractViolation("section fluxes need a strip mesh")
    nx, ny = st["nx"], st["ny"]
    # cell index = i * ny + j with i transverse, j axial
    return np.arange(nx * ny).reshape(nx, ny).T


def flux_profile(u, mesh=None, flux=None, rows=None):
    """Flux ``int u_2 dx1`` through every axial Gauss station of a strip mesh.

    ``u`` is a velocity Field (exact section quadrature) or an analytic
    profile vector exposing ``section_flux``.
    """
    mesh = mesh if mesh is not None else u.mesh
    cells_by_row = _strip_rows(mesh)
    t, w = ref.gauss_legendre(3)
    XI, ETA = np.meshgrid(t, t, indexing="ij")      # [xi index, station index]
    N, dN, _ = ref.q2_basis(XI.ravel(), ETA.ravel())
    N = N.reshape(3, 3, 9)
    dN = dN.reshape(3, 3, 9, 2)
    rows = range(cells_by_row.shape[0]) if rows is None else rows
    stations, fluxes = [], []
    for j in rows:
        cells = cells_by_row[j]
        X = mesh.points[mesh.cells_q2[cells]]             # (nx, 9, 2)
        # each station eta = const is the straight section x2 = const
        x2 = N[0] @ X[0, :, 1]
        if isinstance(u, Field):
            U = u.velocity()[mesh.cells_q2[cells]]
            dx1 = np.einsum("gsk,ck->cgs", dN[..., 0], X[..., 0])
            u2 = np.einsum("gsk,ck->cgs", N, U[..., 1])
            fl = np.einsum("g,cgs,cgs->s", w, u2, dx1)
        else:
            fl = u.section_flux(x2)
        stations.append(x2)
        fluxes.append(fl)
    stations = np.concatenate(stations)
    fluxes = np.concatenate(fluxes)
    refv = float(flux) if flux is not None else float(fluxes[0])
    drift = float(np.max(np.abs(fluxes - refv)) / max(abs(refv), 1e-300))
    return FluxProfile(stations, fluxes, refv, drift)


# ---------------------------------------------------------------------------
# Payne identity
# ---------------------------------------------------------------------------

def payne_residual(f, mesh=None, origin=(0.0, 0.0), normal_tol=1e-10, order=5):
    """Discrete value of the integrated Payne identity (analytically zero).

    With ``X = x - origin`` the identity integrates
    ``|f|^2 + div f (X.f) + f_i X_j d_i f_j`` over the domain and subtracts
    ``int (f.n)(X.f)`` over the non-wall boundary (the artificial ends).
    """
    mesh = mesh if mesh is not None else f.mesh
    trace = _wall_normal_trace(f, mesh)
    scale = max(1.0, float(np.max(np.abs(f.velocity() if isinstance(f, Field)
                                         else f.evaluate(mesh.points)))))
    if trace.size and trace.max() > normal_tol * scale:
        raise ContractViolation(f"normal trace {trace.max():.3e} on walls")
    q, (val, grad) = _volume_data(f, mesh, order=order)
    X = q.points - np.asarray(origin)
    Xf = np.sum(X * val, axis=-1)
    div = grad[..., 0, 0] + grad[..., 1, 1]
    # f_i X_j d_i f_j: grad[..., j, i] = d_i f_j
    third = np.einsum("cqi,cqj,cqji->cq", val, X, grad)
    integrand = np.sum(val * val, axis=-1) + div * Xf + third
    total = float(np.sum(q.weights * integrand))
    fq = mesh.facet_quadrature if order == 3 else _facet_quadrature(mesh, order)
    sel = fq.select([FacetTag.INFLOW, FacetTag.OUTFLOW])
    if np.any(sel):
        if isinstance(f, Field):
            fv, _ = f.at_facets(fq)
            fv = fv[sel]
        else:
            fv = f.evaluate(fq.points[sel].reshape(-1, 2)).reshape(fq.points[sel].shape)
        Xb = fq.points[sel] - np.asarray(origin)
        total -= float(np.sum(fq.weights[sel] * np.sum(fv * fq.normals[sel], -1)
                              * np.sum(Xb * fv, -1)))
    return abs(total)


# ---------------------------------------------------------------------------
# Poincare and Korn-type ratios
# ---------------------------------------------------------------------------

@dataclass
class PoincareResult:
    ratio: float
    mode: str
    violation: float


def poincare_ratio(w, mode="transverse", tol=1e-8):
    """``||w|| / ||grad w||`` (transverse derivative only for strips in transverse mode).

    Modes: ``transverse`` (w.n = 0 on walls), ``flux_subtracted`` (zero
    section flux), ``truncated`` (full gradient over the truncated strip,
    zero section flux).
    """
    if mode not in ("transverse", "flux_subtracted", "truncated"):
        raise ContractViolation(f"unknown Poincare mode {mode!r}")
    mesh = w.mesh
    q, (val, grad) = _volume_data(w, mesh)
    if val.ndim == 2:
        val, grad = val[..., None], grad[..., None, :]
    l2 = math.sqrt(float(np.sum(q.weights * np.sum(val**2, axis=-1))))
    is_strip = mesh.structure.get("kind") == "strip"
    violation = 0.0
    if w.space.is_vector:
        trace = _wall_normal_trace(w, mesh)
        violation = float(trace.max()) if trace.size else 0.0
        if violation > tol * max(l2, 1e-300) + 1e-13:
            raise ContractViolation(f"normal trace {violation:.3e} violates the hypothesis")
    if mode in ("flux_subtracted", "truncated"):
        fp = flux_profile(w, flux=0.0)
        violation = float(np.max(np.abs(fp.flux)))
        if violation > tol * max(l2, 1e-300) + 1e-13:
            raise ContractViolation(f"section flux {violation:.3e} does not vanish")
    if mode in ("transverse", "flux_subtracted") and is_strip:
        dens = np.sum(grad[..., 0] ** 2, axis=-1)
    else:
        dens = np.sum(grad**2, axis=(-2, -1))
    h1 = math.sqrt(float(np.sum(q.weights * dens)))
    return PoincareResult(l2 / h1 if h1 > 0 else math.inf, mode, violation)


def korn_combined_ratio(u, alpha, normal_tol=1e-10):
    """``(2 ||Su||^2 + alpha ||u_tau||^2_wall) / ||grad u||^2`` for a velocity field."""
    mesh = u.mesh
    trace = _wall_normal_trace(u, mesh)
    scale = max(float(np.max(np.abs(u.velocity()))), 1e-300)
    if trace.size and trace.max() > normal_tol * max(scale, 1.0):
        raise ContractViolation(f"normal trace {trace.max():.3e} on walls")
    V = Space(mesh, Family.VECTOR_Q2)
    x = u.values[: V.n_dofs]
    num = x @ (assemble_stress_form(V) @ x) + x @ (assemble_slip_boundary_form(V, alpha) @ x)
    den = x @ (assemble_vector_laplacian(V) @ x)
    return float(num / den) if den > 0 else math.nan


# ---------------------------------------------------------------------------
# strong-form boundary residuals
# ---------------------------------------------------------------------------

@dataclass
class SlipResidual:
    points: np.ndarray             # wall point indices
    curvilinear: np.ndarray        # |tau.(grad u n) - (kappa - alpha) u.tau|, or |d_n g + alpha g|
    navier: Optional[np.ndarray]   # |2 (Su n).tau + alpha u.tau|
    normal: Optional[np.ndarray]   # |u.n|
    l2_curvilinear: float
    l2_navier: float
    max_normal: float


def _nodal_wall_gradients(f):
    """Average of the one-sided cell gradients at each wall point."""
    mesh = f.mesh
    wall = mesh.wall_points
    widx = mesh.wall_index
    ncomp = 2 if f.space.is_vector else 1
    acc = np.zeros((wall.size, ncomp, mesh.dim))
    cnt = np.zeros(wall.size)
    loc = f.cell_values()
    if loc.ndim == 2:
        loc = loc[..., None]
    if mesh.dim == 1:
        dN = ref.dp2(np.array([-1.0, 0.0, 1.0]))      # derivative at local nodes (left, mid, right)
        X = mesh.points[mesh.cells_q2, 0]
        for k in (0, 2):
            pts = mesh.cells_q2[:, k]
            rows = widx[pts]
            sel = rows >= 0
            J = X[sel] @ dN[k]
            g = np.einsum("b,cbi->ci", dN[k], loc[sel]) / J[:, None]
            np.add.at(acc, rows[sel], g[..., None])
            np.add.at(cnt, rows[sel], 1.0)
        return acc / cnt[:, None, None]
    for k in range(9):
        pts = mesh.cells_q2[:, k]
        rows = widx[pts]
        sel = np.flatnonzero(rows >= 0)
        if sel.size == 0:
            continue
        xi, eta = ref.local_node_reference(k)
        _, dN, _ = ref.q2_basis(np.array([xi]), np.array([eta]))
        X = mesh.points[mesh.cells_q2[sel]]
        J = np.einsum("cki,kj->cij", X, dN[0])
        G = np.einsum("kj,cji->cki", dN[0], np.linalg.inv(J))
        g = np.einsum("cki,ckd->cid", loc[sel], G)
        np.add.at(acc, rows[sel], g)
        np.add.at(cnt, rows[sel], 1.0)
    return acc / cnt[:, None, None]


def _wall_l2(mesh, nodal):
    """L2 norm over wall facets of a nodal wall quantity (quadratic along each facet)."""
    fq = mesh.facet_quadrature
    sel = np.flatnonzero(mesh.facet_tags == FacetTag.WALL.value)
    if mesh.dim == 1:
        return float(np.sqrt(np.sum(nodal**2)))
    rows = mesh.wall_index[mesh.facets[sel]]          # (nf, 3)
    L = ref.p2(fq.local_t)                             # (nq, 3)
    vals = np.einsum("qk,fk->fq", L, nodal[rows])
    return float(np.sqrt(np.sum(fq.weights[sel] * vals**2)))


def slip_residual_curvilinear(u, alpha):
    """Strong-form slip residuals at wall nodes with one-sided mapped gradients.

    Vector fields: ``tau.(grad u n) - (kappa - alpha) u.tau`` together with
    the stress form ``2 (Su n).tau + alpha u.tau`` and ``u.n``.  Scalar
    (axial) fields: ``d_n g + alpha g``.
    """
    mesh = u.mesh
    wall = mesh.wall_points
    grad = _nodal_wall_gradients(u)
    n = mesh.normals
    if not u.space.is_vector:
        g = u.values[wall]
        res = np.abs(np.einsum("wd,wd->w", grad[:, 0, :], n) + alpha * g)
        return SlipResidual(wall, res, None, None, _wall_l2(mesh, res), math.nan, 0.0)
    if mesh.tangents is None:
        raise ContractViolation("wall frames without tangents")
    tau, kappa = mesh.tangents, mesh.curvature
    val = u.velocity()[wall]
    ut = np.sum(val * tau, axis=1)
    gn = np.einsum("wid,wd->wi", grad, n)               # (grad u) n
    curv = np.sum(tau * gn, axis=1) - (kappa - alpha) * ut
    S = 0.5 * (grad + np.swapaxes(grad, 1, 2))
    nav = 2 * np.einsum("wij,wj,wi->w", S, n, tau) + alpha * ut
    normal = np.abs(np.sum(val * n, axis=1))
    return SlipResidual(wall, np.abs(curv), np.abs(nav), normal, _wall_l2(mesh, np.abs(curv)),
                        _wall_l2(mesh, np.abs(nav)), float(normal.max()))


# ---------------------------------------------------------------------------
# exponential decay
# ---------------------------------------------------------------------------

@dataclass
class DecayFit:
    stations: np.ndarray
    G: np.ndarray
    logG: np.ndarray
    sigma: float
    C: float
    r2: float
    dropped: list
    void: bool
    pointwise: dict = field(default_factory=dict)

    def to_dict(self):
        d = asdict(self)
        for k in ("stations", "G", "logG"):
            d[k] = [float(v) for v in d[k]]
        return d


def _linear_fit(x, y):
    A = np.stack([np.ones_like(x), x], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return float(coef[0]), float(coef[1]), r2


def tail_energy(v, stations):
    """``G(z) = int_{|x2| > z} |grad v|^2`` with exact sub-cell integration on strip rows."""
    mesh = v.mesh
    rows = _strip_rows(mesh)
    t, w = ref.gauss_legendre(3)
    loc_all = v.velocity()[mesh.cells_q2]
    out = []
    # axial extent of each row of cells
    ylo = mesh.points[mesh.cells_q2[rows[:, 0], 0], 1]
    yhi = mesh.points[mesh.cells_q2[rows[:, 0], 8], 1]
    full = _row_energy(mesh, loc_all, rows, -1.0, 1.0, t, w)
    for z in np.atleast_1d(stations):
        total = 0.0
        for side in (1.0, -1.0):
            for j in range(rows.shape[0]):
                a, b = (ylo[j], yhi[j]) if side > 0 else (-yhi[j], -ylo[j])
                if a >= z:
                    total += full[j]
                elif b > z:
                    # fraction of the row beyond the station (axially affine rows)
                    frac = (z - a) / (b - a)
                    if side > 0:
                        lo_eta, hi_eta = -1.0 + 2.0 * frac, 1.0
                    else:
                        lo_eta, hi_eta = -1.0, 1.0 - 2.0 * frac
                    total += _row_energy(mesh, loc_all, rows[j:j + 1], lo_eta, hi_eta, t, w)[0]
        out.append(total)
    return np.asarray(out)


def _row_energy(mesh, loc_all, rows, lo, hi, t, w):
    eta = 0.5 * (lo + hi) + 0.5 * (hi - lo) * t
    XI, ETA = np.meshgrid(t, eta, indexing="ij")
    W = np.outer(w, w * 0.5 * (hi - lo)).ravel()
    _, dN, _ = ref.q2_basis(XI.ravel(), ETA.ravel())
    cells = rows.ravel()
    X = mesh.points[mesh.cells_q2[cells]]
    J = np.einsum("cki,qkj->cqij", X, dN)
    det = np.linalg.det(J)
    G = np.einsum("qkj,cqji->cqki", dN, np.linalg.inv(J))
    gv = np.einsum("cqkd,cki->cqid", G, loc_all[cells])
    e = np.einsum("q,cq,cq->c", W, det, np.sum(gv**2, axis=(-2, -1)))
    return e.reshape(rows.shape).sum(axis=1)


def default_stations(Z, zeta, step=0.5):
    lo, hi = Z + 1.0, zeta - 1.0
    return np.arange(lo, hi + 1e-9, step)


def decay_fit(v, stations=None, Z=None, zeta=None, samples=41):
    """Least-squares fit ``log G(z) = log C - sigma z`` over outlet stations.

    Stations with ``G <= 100 eps G_total`` are dropped as noise; with fewer
    than two left the fit is declared void.  A second fit uses the discrete
    sup norm of ``v`` on the sections ``x2 = +-z``.
    """
    mesh = v.mesh
    spec = mesh.spec
    Z = Z if Z is not None else spec.Z
    zeta = zeta if zeta is not None else spec.zeta
    st = default_stations(Z, zeta) if stations is None else np.asarray(stations, dtype=float)
    if st.size < 4 or np.any(np.diff(st) <= 0):
        raise ContractViolation("need at least four ascending stations")
    if st[0] <= Z + 1 - 1e-12 or st[-1] >= zeta - 1 + 1e-12:
        if not (st[0] >= Z + 1 - 1e-12 and st[-1] <= zeta - 1 + 1e-12):
            raise ContractViolation("stations must lie in [Z + 1, zeta - 1]")
    G = tail_energy(v, st)
    total = float(tail_energy(v, [0.0])[0])
    keep = G > 100 * EPS * total
    dropped = [float(s) for s in st[~keep]]
    logG = np.where(G > 0, np.log(np.where(G > 0, G, 1.0)), -np.inf)
    if keep.sum() < 2:
        return DecayFit(st, G, logG, math.nan, math.nan, math.nan, dropped, True)
    c0, slope, r2 = _linear_fit(st[keep], logG[keep])
    # pointwise sup over each section (discrete max over sample points)
    x1 = np.linspace(0.0, 1.0, samples)
    sup = []
    for z in st:
        pts = np.concatenate([np.stack([x1, np.full_like(x1, z)], 1),
                              np.stack([x1, np.full_like(x1, -z)], 1)])
        sup.append(float(np.nanmax(np.linalg.norm(v.evaluate(pts), axis=1))))
    sup = np.asarray(sup)
    pw = {"sup": [float(s) for s in sup]}
    ok = sup > 100 * EPS * max(sup.max(), 1e-300)
    if ok.sum() >= 2:
        p0, pslope, pr2 = _linear_fit(st[ok], np.log(sup[ok]))
        pw.update({"sigma": -pslope, "C": math.exp(p0), "r2": pr2})
    return DecayFit(st, G, logG, -slope, math.exp(c0), r2, dropped, False, pw)


# ---------------------------------------------------------------------------
# energy linearity
# ---------------------------------------------------------------------------

@dataclass
class LinearityTable:
    fluxes: list
    ratios: list
    spread: float


def energy_linearity(solutions, n_small=2):
    """Table of ``||v||_H1 / flux``; ``spread`` compares the ``n_small`` smallest fluxes."""
    from .navier_stokes import h1_norm
    rows = sorted(((s.flux, h1_norm(s.v)) for s in solutions), key=lambda r: r[0])
    if len(rows) < 2:
        raise ContractViolation("need at least two solutions")
    if len({r[0] for r in rows}) < len(rows):
        raise ContractViolation("fluxes must be distinct")
    ratios = [n / f if f > 0 else math.nan for f, n in rows]
    small = np.asarray(ratios[:n_small])
    spread = float((small.max() - small.min()) / max(abs(small).max(), 1e-300))
    if np.all(small == 0):
        spread = 0.0
    return LinearityTable([r[0] for r in rows], ratios, spread)


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    value: float
    tolerance: float
    comparison: str
    passed: bool
    provenance: str = ""
    details: dict = field(default_factory=dict)


@dataclass
class Report:
    environment: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)

    def add(self, name, value, tolerance, comparison="le", provenance="", **details):
        """Record a check; comparison is ``le`` (value <= tol), ``ge``, ``gt`` or ``abs_le``."""
        value = float(value)
        if comparison == "le":
            ok = value <= tolerance
        elif comparison == "ge":
            ok = value >= tolerance
        elif comparison == "gt":
            ok = value > tolerance
        elif comparison == "abs_le":
            ok = abs(value) <= tolerance
        else:
            raise ContractViolation(f"unknown comparison {comparison!r}")
        ok = bool(ok and math.isfinite(value))
        c = Check(name, value, float(tolerance), comparison, ok, provenance, details)
        self.checks.append(c)
        return c

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def failed(self):
        return [c.name for c in self.checks if not c.passed]

    def to_dict(self):
        return jsonable({"environment": self.environment, "passed": self.passed,
                          "checks": [asdict(c) for c in self.checks]})

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self):
        width = max([len(c.name) for c in self.checks] + [5])
        sym = {"le": "<=", "ge": ">=", "gt": ">", "abs_le": "|.|<="}
        lines = [f"{'check':<{width}}  {'value':>12}  {'':5} {'tolerance':>10}  status"]
        for c in self.checks:
            lines.append(f"{c.name:<{width}}  {c.value:12.4e}  {sym[c.comparison]:5} "
                         f"{c.tolerance:10.2e}  {'PASS' if c.passed else 'FAIL'}")
        return "\n".join(lines)
