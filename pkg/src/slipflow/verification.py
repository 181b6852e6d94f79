"""The default verification suite behind ``slipflow verify``.

``verification_report`` runs every check on the configured strip scenario
plus a handful of scenario-independent identity checks on small analytic
problems, and returns a diagnostics Report.
"""

import math

import numpy as np

from . import io
from .diagnostics import (AnalyticField, Report, decay_fit, default_stations, energy_linearity,
                          flux_profile, korn_combined_ratio, payne_residual, poincare_ratio,
                          slip_residual_curvilinear)
from .errors import ContractViolation
from .fem import Family, Field, Space, interpolate
from .mesh import DomainSpec, build_cross_section_mesh, build_strip_mesh, default_star
from .poiseuille import closed_form_reference, poiseuille_profile


def _guarded(report, name, fn, tolerance, comparison="le", provenance="", **details):
    """Add a check whose evaluation may reject its input (recorded as a failure)."""
    try:
        value = fn()
    except ContractViolation as exc:
        return report.add(name, math.nan, tolerance, comparison, provenance,
                          error=str(exc), **details)
    return report.add(name, value, tolerance, comparison, provenance, **details)


# analytic tangential fields for the Payne identity ------------------------------

def _strip_field():
    def val(x):
        a, b = x[:, 0], x[:, 1]
        return np.stack([np.sin(np.pi * a) * np.cos(b),
                         np.pi * np.cos(np.pi * a) * np.sin(b) + b * b], axis=1)

    def grad(x):
        a, b = x[:, 0], x[:, 1]
        g = np.zeros((len(x), 2, 2))
        g[:, 0, 0] = np.pi * np.cos(np.pi * a) * np.cos(b)
        g[:, 0, 1] = -np.sin(np.pi * a) * np.sin(b)
        g[:, 1, 0] = -np.pi**2 * np.sin(np.pi * a) * np.sin(b)
        g[:, 1, 1] = np.pi * np.cos(np.pi * a) * np.cos(b) + 2 * b
        return g

    return AnalyticField(val, grad)


def _rotation_field():
    return AnalyticField(lambda x: np.stack([-x[:, 1], x[:, 0]], axis=1),
                         lambda x: np.broadcast_to(np.array([[0.0, -1.0], [1.0, 0.0]]),
                                                   (len(x), 2, 2)))


def identity_checks(report):
    """Scenario-independent checks on analytic fields and cross-sections."""
    strip = build_strip_mesh(DomainSpec.straight_strip(3.0, 1.0, 1.0), 8)
    disk = build_cross_section_mesh(DomainSpec.disk(1.0, 1.0), 8)
    payne = max(payne_residual(_strip_field(), mesh=strip),
                payne_residual(_rotation_field(), mesh=disk))
    report.add("identity.payne_analytic", payne, 1e-10, provenance="analytic tangential fields")
    S = Space(build_strip_mesh(DomainSpec.straight_strip(3.0, 1.0, 1.0), 8), Family.SCALAR_Q2)
    w = interpolate(S, lambda x: np.sin(np.pi * x[:, 0]), "sin")
    report.add("identity.poincare_sin", poincare_ratio(w).ratio - 1 / np.pi, 1e-3, "abs_le",
               provenance="sin(pi x1) on a straight strip, exact ratio 1/pi")
    # Poiseuille profiles
    sec = DomainSpec.interval(1.0, 1.0)
    prof = poiseuille_profile(sec, flux=1.0, resolution=8)
    exact = closed_form_reference(sec, 1.0, 1.0)
    x = prof.mesh.points[:, 0]
    report.add("poiseuille.closed_form_interval", np.max(np.abs(prof.profile.values - exact(x))),
               1e-10, provenance="interval alpha=1 flux=1, nodal values")
    gaps = [prof.energy_check.rel_gap]
    for spec in (DomainSpec.disk(1.0, 1.0), default_star(1.0)):
        gaps.append(poiseuille_profile(spec, resolution=16).energy_check.rel_gap)
    report.add("poiseuille.energy_identity", max(gaps), 1e-10,
               provenance="interval, disk and star cross-sections")


def _inject_normal_trace(u, amplitude=1e-3):
    """Copy of a velocity field with a normal component added on the walls."""
    m = u.mesh
    vals = u.velocity().copy()
    vals[m.wall_points] += amplitude * m.normals
    return Field(u.space, vals.ravel(), u.name + "_broken")


def verification_report(cfg, seed=0):
    from .cli import _ns_problem, domain_spec
    from .navier_stokes import h1_norm, solve_ns, uniqueness_probe

    report = Report()
    spec = domain_spec(cfg)
    identity_checks(report)
    if spec.kind != "strip":
        report.environment = io.environment_echo(cfg, None, seed=seed)
        return report
    flux = float(cfg["flux"])
    vcfg = cfg["verify"]
    prob = _ns_problem(cfg, spec, flux)
    mesh = prob.mesh
    report.environment = io.environment_echo(
        cfg, mesh, seed=seed, alpha=spec.alpha, flux=flux, zeta=spec.zeta, Z=spec.Z,
        resolution=cfg["resolution"] or 8)

    # profile vector
    a = prob.profile
    rng = np.random.default_rng(seed)
    x2 = np.linspace(-spec.zeta, spec.zeta, 401)
    drift = np.max(np.abs(a.section_flux(x2) - flux)) / max(flux, 1e-300)
    report.add("profile_vector.flux_drift", drift, 1e-10, provenance="analytic a, 401 sections")
    pts = np.stack([rng.uniform(0, 1, 2000), rng.uniform(-spec.zeta, spec.zeta, 2000)], 1)
    inside = (pts[:, 0] > spec.lower(pts[:, 1])) & (pts[:, 0] < spec.upper(pts[:, 1]))
    report.add("profile_vector.divergence", np.max(np.abs(a.divergence(pts[inside]))), 1e-10,
               provenance="analytic a at random interior points")
    a_h = a.interpolate(mesh)
    outlet = np.abs(mesh.points[:, 1]) >= spec.Z
    g = a.g_right(mesh.points[outlet, 0])
    dev = max(np.max(np.abs(a_h.velocity()[outlet, 1] - g)),
              np.max(np.abs(a_h.velocity()[outlet, 0])))
    report.add("profile_vector.outlet_exactness", dev, 0.0,
               provenance="a_h against Poiseuille nodal values for |x2| >= Z")

    # base solve
    sol = solve_ns(prob)
    tol = max(prob.atol, prob.rtol * sol.history[0]["residual"])
    report.add("ns.converged", sol.history[-1]["residual"], tol,
               provenance="dual residual norm", iterations=len(sol.history) - 1)
    u, v = sol.u, sol.v
    if vcfg["inject"] == "normal_trace":
        u = _inject_normal_trace(u)
        v = Field(u.space, u.values - sol.a.values, "v_broken")
    sr = slip_residual_curvilinear(u, spec.alpha)
    report.add("ns.wall_normal_trace", sr.max_normal, 1e-12, provenance="max |u.n| at wall nodes",
               slip_l2=sr.l2_navier)
    report.add("ns.flux_drift", flux_profile(u, flux=flux).max_drift, 1e-3,
               provenance="relative, all axial Gauss stations")
    _guarded(report, "identity.payne_discrete", lambda: payne_residual(u), 1e-6,
             provenance="discrete u; converges under refinement")

    # linear regime, uniqueness, construction independence
    sols = [sol]
    for f in vcfg["linearity_fluxes"]:
        if f != flux:
            sols.append(solve_ns(prob.with_flux(float(f))))
    lin = [s for s in sols if s.flux in [float(f) for f in vcfg["linearity_fluxes"]]]
    if len(lin) >= 2:
        t = energy_linearity(lin)
        report.add("ns.energy_linearity", t.spread, 0.1, provenance="||v||_H1 / flux",
                   fluxes=t.fluxes, ratios=t.ratios)
    probe = uniqueness_probe(prob, k=int(vcfg["starts"]), seed=seed)
    report.add("ns.uniqueness", probe.max_distance, 1e-8,
               provenance="pairwise relative H1 distances", starts=probe.starts,
               excluded=probe.excluded)
    c0, c1 = vcfg["carriers"]
    s0 = solve_ns(_ns_problem({**cfg, "carrier": {"kind": "bump", "bounds": c0}}, spec, flux))
    s1 = solve_ns(_ns_problem({**cfg, "carrier": {"kind": "bump", "bounds": c1}}, spec, flux))
    du = Field(s0.u.space, s0.u.values - s1.u.values, "du")
    report.add("ns.carrier_independence", h1_norm(du), 10 * prob.atol,
               provenance="H1 distance of u for two flux carriers", carriers=[c0, c1])

    # Korn-type floor over every converged deficit with non-zero energy
    deficits = [v] + [s.v for s in sols[1:] + [s0, s1] if s.converged]
    ratios = []
    for d in deficits:
        if h1_norm(d) > 0:
            ratios.append(_guarded(Report(), "k", lambda d=d: korn_combined_ratio(d, spec.alpha),
                                   0.0).value)
    if ratios:
        floor = math.nan if any(math.isnan(r) for r in ratios) else min(ratios)
        report.add("korn.combined_floor", floor, 1e-3, "ge",
                   provenance="min over converged deficits", ratios=ratios)

    # decay on the configured truncation
    st = default_stations(spec.Z, spec.zeta, cfg["decay"]["step"])
    if st.size >= 4:
        fit = decay_fit(v, stations=st) if vcfg["inject"] is None else None
        if fit is not None and not fit.void:
            report.add("decay.sigma_positive", fit.sigma, 0.0, "gt",
                       provenance="log-linear fit of the tail energy")
            report.add("decay.r2", fit.r2, 0.98, "ge", provenance="log-linear fit")
    return report
