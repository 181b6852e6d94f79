"""Command-line driver: one scenario file in, fields and reports out.

Usage::

    slipflow poiseuille   --config run.yaml --out results/
    slipflow solve        --config run.yaml --out results/
    slipflow decay-study  --config run.yaml --out results/
    slipflow verify       --config run.yaml --out results/ [--seed 0]

The configuration is a YAML mapping; ``schema_version`` is required (see
``SCHEMA`` below and the README for every key).  Exit codes: 0 success,
2 configuration error, 3 solver non-convergence, 4 diagnostic failure.
"""

import argparse
import copy
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import io
from .errors import ContractViolation, NonFiniteResidualError
from .mesh import DomainSpec, bump_wall, default_star, flat_wall

log = logging.getLogger("slipflow")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_DIAGNOSTIC = 0, 2, 3, 4

# allowed keys per section with their default values (None: no default)
SCHEMA = {
    "schema_version": None,
    "domain": {
        "kind": None, "alpha": 1.0, "length": 1.0, "radius": 1.0,
        "lobes": 3, "amplitude": 0.15, "samples": 96,
        "zeta": 6.0, "Z": 2.0, "bump": None,
    },
    "flux": 1.0,
    "fluxes": None,
    "resolution": None,
    "resolutions": None,
    "solver": {"atol": 1e-10, "rtol": 1e-12, "max_iter": 30, "picard_steps": 3,
               "flux_ceiling": 10.0},
    "carrier": {"kind": "auto", "bounds": [0.25, 0.75]},
    "decay": {"truncations": None, "stations": None, "step": 0.5},
    "verify": {"starts": 3, "inject": None, "carriers": [[0.25, 0.75], [0.3, 0.6]],
               "linearity_fluxes": [1e-3, 1e-2]},
    "output": "slipflow-out",
    "sweep": None,
}
BUMP_KEYS = {"amplitude": 0.3, "half_width": None, "center": 0.0, "wall": "upper"}


class ConfigError(Exception):
    """Invalid configuration; the message names the offending line or field."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _number(cfg, path, positive=False, integer=False):
    val = cfg
    for k in path.split("."):
        val = val[k]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"field '{path}': expected a number, got {val!r}")
    if integer and int(val) != val:
        raise ConfigError(f"field '{path}': expected an integer, got {val!r}")
    if not math.isfinite(val) or (positive and val <= 0):
        raise ConfigError(f"field '{path}': must be {'positive' if positive else 'finite'}, "
                          f"got {val!r}")
    return int(val) if integer else float(val)


def load_config(path):
    """Read and validate a YAML run configuration; returns a plain dict."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        line = mark.line + 1 if mark is not None else "?"
        raise ConfigError(f"{path}: line {line}: {exc.problem}") from None
    if raw is None:
        raise ConfigError(f"{path}: empty configuration")
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return validate_config(raw)


def validate_config(raw):
    for k, v in raw.items():
        if k not in SCHEMA:
            raise ConfigError(f"field '{k}': unknown key")
        if isinstance(SCHEMA[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"field '{k}': expected a mapping")
            for kk in v:
                if kk not in SCHEMA[k]:
                    raise ConfigError(f"field '{k}.{kk}': unknown key")
    if "schema_version" not in raw:
        raise ConfigError("field 'schema_version': missing")
    if raw["schema_version"] != SCHEMA_VERSION:
        raise ConfigError(f"field 'schema_version': unsupported value {raw['schema_version']!r}"
                          f" (this build reads {SCHEMA_VERSION})")
    if "domain" not in raw or "kind" not in raw["domain"]:
        raise ConfigError("field 'domain.kind': missing")
    defaults = {k: (dict(v) if isinstance(v, dict) else v) for k, v in SCHEMA.items()}
    cfg = _merge(defaults, raw)
    d = cfg["domain"]
    if d["kind"] not in ("interval", "disk", "star", "strip"):
        raise ConfigError(f"field 'domain.kind': unknown domain {d['kind']!r}")
    _number(cfg, "domain.alpha", positive=True)
    _number(cfg, "flux")
    if d["kind"] == "strip":
        _number(cfg, "domain.zeta", positive=True)
        _number(cfg, "domain.Z", positive=True)
        if d["bump"] is not None:
            if not isinstance(d["bump"], dict):
                raise ConfigError("field 'domain.bump': expected a mapping or null")
            for kk in d["bump"]:
                if kk not in BUMP_KEYS:
                    raise ConfigError(f"field 'domain.bump.{kk}': unknown key")
            d["bump"] = {**BUMP_KEYS, **d["bump"]}
            if d["bump"]["wall"] not in ("upper", "lower"):
                raise ConfigError("field 'domain.bump.wall': must be 'upper' or 'lower'")
    for key in ("resolution",):
        if cfg[key] is not None:
            _number(cfg, key, positive=True, integer=True)
    if cfg["resolutions"] is not None:
        if (not isinstance(cfg["resolutions"], list) or len(cfg["resolutions"]) < 2
                or any(not isinstance(r, int) or r <= 0 for r in cfg["resolutions"])):
            raise ConfigError("field 'resolutions': expected a list of >= 2 positive integers")
    if cfg["fluxes"] is not None:
        fl = cfg["fluxes"]
        if not isinstance(fl, list) or not fl or any(
                isinstance(f, bool) or not isinstance(f, (int, float)) or f < 0 for f in fl):
            raise ConfigError("field 'fluxes': expected a list of non-negative numbers")
    for k in ("atol", "rtol", "flux_ceiling"):
        _number(cfg, f"solver.{k}", positive=True)
    for k in ("max_iter", "picard_steps"):
        _number(cfg, f"solver.{k}", integer=True)
    if cfg["carrier"]["kind"] not in ("auto", "bump", "poiseuille"):
        raise ConfigError(f"field 'carrier.kind': unknown carrier {cfg['carrier']['kind']!r}")
    b = cfg["carrier"]["bounds"]
    if not (isinstance(b, list) and len(b) == 2 and 0 < b[0] < b[1] < 1):
        raise ConfigError("field 'carrier.bounds': expected [lo, hi] with 0 < lo < hi < 1")
    if cfg["verify"]["inject"] not in (None, "normal_trace"):
        raise ConfigError(f"field 'verify.inject': unknown injection {cfg['verify']['inject']!r}")
    if cfg["sweep"] is not None:
        if not isinstance(cfg["sweep"], list) or not all(isinstance(s, dict) for s in cfg["sweep"]):
            raise ConfigError("field 'sweep': expected a list of override mappings")
        for s in cfg["sweep"]:
            if "sweep" in s:
                raise ConfigError("field 'sweep': scenarios cannot nest sweeps")
    return cfg


def domain_spec(cfg, zeta=None):
    d = cfg["domain"]
    alpha = float(d["alpha"])
    try:
        if d["kind"] == "interval":
            return DomainSpec.interval(float(d["length"]), alpha)
        if d["kind"] == "disk":
            return DomainSpec.disk(float(d["radius"]), alpha)
        if d["kind"] == "star":
            return default_star(alpha, int(d["lobes"]), float(d["amplitude"]), int(d["samples"]))
        zeta = float(d["zeta"]) if zeta is None else float(zeta)
        Z = float(d["Z"])
        if d["bump"] is None:
            return DomainSpec.straight_strip(zeta, Z, alpha)
        b = d["bump"]
        hw = Z / 2 if b["half_width"] is None else float(b["half_width"])
        if b["wall"] == "upper":
            lower, upper = flat_wall(0.0), bump_wall(1.0, b["amplitude"], hw, b["center"])
        else:
            lower, upper = bump_wall(0.0, b["amplitude"], hw, b["center"]), flat_wall(1.0)
        return DomainSpec.distorted_strip(lower, upper, zeta=zeta, Z=Z, alpha=alpha)
    except ContractViolation as exc:
        raise ConfigError(f"field 'domain': {exc}") from None


def _carrier_kind(cfg, spec):
    kind = cfg["carrier"]["kind"]
    if kind == "auto":
        # A = 0 for the Poiseuille carrier, so a straight strip is solved exactly
        return "poiseuille" if spec.is_straight else "bump"
    return kind


def _ns_problem(cfg, spec, flux, bounds=None):
    from .navier_stokes import make_problem
    s = cfg["solver"]
    res = cfg["resolution"] or 8
    try:
        return make_problem(spec, res, flux, carrier=_carrier_kind(cfg, spec),
                            bounds=tuple(bounds or cfg["carrier"]["bounds"]),
                            atol=s["atol"], rtol=s["rtol"], max_iter=int(s["max_iter"]),
                            picard_steps=int(s["picard_steps"]), flux_ceiling=s["flux_ceiling"])
    except ContractViolation as exc:
        raise ConfigError(f"scenario rejected: {exc}") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

@dataclass
class Outcome:
    code: int
    summary: dict = field(default_factory=dict)


def run_poiseuille(cfg, out, seed=0):
    from .poiseuille import (DEFAULT_RESOLUTION, closed_form_reference, l2_error,
                             poiseuille_profile)
    spec = domain_spec(cfg)
    flux = float(cfg["flux"])
    sign = -1.0 if flux < 0 else 1.0
    section = DomainSpec.interval(1.0, spec.alpha) if spec.kind == "strip" else spec
    res = cfg["resolution"] or DEFAULT_RESOLUTION[section.kind]
    prof = poiseuille_profile(section, flux=abs(flux), resolution=res)
    mesh = prof.mesh
    env = io.environment_echo(cfg, mesh, seed=seed)
    g = sign * prof.profile.values
    pts = mesh.points.reshape(mesh.n_points, -1)
    order = np.lexsort(pts.T[::-1])
    cols = {"x1": pts[order, 0]}
    if mesh.dim == 2:
        cols["x2"] = pts[order, 1]
    cols["g"] = g[order]
    io.write_csv(out / "profile.csv", cols, env)
    io.write_vtk(out / "profile.vtk", mesh, [("g", g)], title="poiseuille", environment=env)
    result = {"kind": section.kind, "alpha": prof.alpha, "flux": flux, "flipped": sign < 0,
              "resolution": res, "C_P": prof.C_P, "energy": prof.energy_check.energy,
              "energy_rel_gap": prof.energy_check.rel_gap,
              "pressure_gradient": sign * prof.pressure_gradient}
    if section.kind in ("interval", "disk"):
        exact = closed_form_reference(section, prof.alpha, abs(flux))
        result["C_P_exact"] = exact.C_P
        result["C_P_rel_error"] = abs(prof.C_P - exact.C_P) / exact.C_P
        result["l2_rel_error"] = l2_error(prof, exact) if flux != 0 else 0.0
        if cfg["resolutions"]:
            errs = []
            for r in cfg["resolutions"]:
                pr = poiseuille_profile(section, flux=1.0, resolution=r)
                errs.append(l2_error(pr, closed_form_reference(section, prof.alpha, 1.0)))
            orders = [math.log2(e0 / e1) if e1 > 0 and e0 > 0 else math.nan
                      for e0, e1 in zip(errs, errs[1:])]
            result["convergence"] = {"resolutions": cfg["resolutions"], "l2_rel_error": errs,
                                     "order": orders}
    io.write_json(out / "poiseuille.json", result, env)
    code = EXIT_OK if prof.energy_check.ok else EXIT_DIAGNOSTIC
    return Outcome(code, result)


def _solution_summary(sol):
    from .diagnostics import flux_profile, slip_residual_curvilinear
    from .navier_stokes import h1_norm
    fp = flux_profile(sol.u, flux=sol.flux)
    sr = slip_residual_curvilinear(sol.u, sol.problem.alpha)
    return {"flux": sol.flux, "converged": sol.converged, "message": sol.message,
            "iterations": len(sol.history) - 1, "residual": sol.history[-1]["residual"],
            "v_h1": h1_norm(sol.v), "u_h1": h1_norm(sol.u), "flux_drift": fp.max_drift,
            "wall_normal_max": sr.max_normal, "slip_l2": sr.l2_navier,
            "history": sol.history}


def run_solve(cfg, out, seed=0):
    from .diagnostics import energy_linearity
    from .navier_stokes import continuation_sweep, solve_ns
    spec = domain_spec(cfg)
    if spec.kind != "strip":
        raise ConfigError("field 'domain.kind': solve needs a strip domain")
    fluxes = cfg["fluxes"]
    flux = float(cfg["flux"])
    if fluxes is None and flux < 0:
        raise ConfigError("field 'flux': must be non-negative (mirror the strip for reverse flow)")
    prob = _ns_problem(cfg, spec, fluxes[0] if fluxes else flux)
    env = io.environment_echo(cfg, prob.mesh, seed=seed)
    try:
        if fluxes:
            sweep = continuation_sweep(prob, fluxes)
            sols = sweep.solutions
            failures = sweep.failures
        else:
            sols = [solve_ns(prob)]
            failures = [] if sols[0].converged else [{"flux": flux, "reason": sols[0].message,
                                                      "history": sols[0].history}]
            if failures:
                sols = []
    except NonFiniteResidualError as exc:
        sols, failures = [], [{"flux": prob.flux, "reason": str(exc), "history": exc.history}]
    except ContractViolation as exc:
        raise ConfigError(f"scenario rejected: {exc}") from None
    result = {"solutions": [_solution_summary(s) for s in sols], "failures": failures,
              "converged": not failures}
    if len(sols) >= 2 and len({s.flux for s in sols}) == len(sols):
        t = energy_linearity(sols)
        result["linearity"] = {"fluxes": t.fluxes, "ratios": t.ratios, "spread": t.spread}
    for s in sols:
        tag = f"flux_{s.flux:.6g}"
        io.write_vtk(out / f"solution_{tag}.vtk", prob.mesh, [s.u, s.v, s.a, s.pressure, s.p],
                     title="navier-stokes", environment=env)
    io.write_json(out / "solver.json", result, env)
    return Outcome(EXIT_OK if not failures else EXIT_NONCONVERGED,
                   {k: v for k, v in result.items() if k != "solutions"})


def run_decay(cfg, out, seed=0):
    from .diagnostics import decay_fit, default_stations
    from .navier_stokes import solve_ns
    d = cfg["domain"]
    if d["kind"] != "strip":
        raise ConfigError("field 'domain.kind': decay-study needs a strip domain")
    zeta0 = float(d["zeta"])
    truncs = cfg["decay"]["truncations"] or [zeta0, 2 * zeta0]
    Z = float(d["Z"])
    flux = float(cfg["flux"])
    stations = cfg["decay"]["stations"]
    st = (np.asarray(stations, dtype=float) if stations is not None
          else default_stations(Z, min(truncs), cfg["decay"]["step"]))
    fits, failures = [], []
    env = io.environment_echo(cfg, None, seed=seed)
    for zeta in truncs:
        spec = domain_spec(cfg, zeta=zeta)
        prob = _ns_problem(cfg, spec, flux)
        sol = solve_ns(prob)
        if not sol.converged:
            failures.append({"zeta": zeta, "reason": sol.message, "history": sol.history})
            continue
        try:
            fit = decay_fit(sol.v, stations=st)
        except ContractViolation as exc:
            raise ConfigError(f"field 'decay.stations': {exc}") from None
        logG = [float(x) for x in fit.logG]
        io.write_csv(out / f"decay_zeta_{zeta:g}.csv",
                     {"zeta": fit.stations, "G": fit.G, "logG": logG},
                     {**env, "truncation": zeta, "mesh_points": prob.mesh.n_points})
        fits.append({"truncation": zeta, **fit.to_dict()})
    result = {"flux": flux, "fits": fits, "failures": failures}
    checks = {}
    live = [f for f in fits if not f["void"]]
    if not live and fits:
        result["void"] = True
        result["note"] = "every station dropped (deficit at noise level): fit declared void"
    elif live:
        result["void"] = False
        checks["sigma_positive"] = all(f["sigma"] > 0 for f in live)
        checks["r2_at_least_0.98"] = all(f["r2"] >= 0.98 for f in live)
        if len(live) >= 2:
            s0, s1 = live[0]["sigma"], live[-1]["sigma"]
            result["sigma_relative_change"] = abs(s1 - s0) / abs(s0)
            checks["sigma_stable_10pct"] = result["sigma_relative_change"] <= 0.1
    result["checks"] = checks
    io.write_json(out / "decay.json", result, env)
    if failures:
        return Outcome(EXIT_NONCONVERGED, result)
    return Outcome(EXIT_OK if all(checks.values()) else EXIT_DIAGNOSTIC, result)


def run_verify(cfg, out, seed=0):
    from .verification import verification_report
    report = verification_report(cfg, seed=seed)
    (out / "report.txt").write_text(report.to_text() + "\n")
    io.write_json(out / "report.json", report.to_dict())
    return Outcome(EXIT_OK if report.passed else EXIT_DIAGNOSTIC,
                   {"passed": report.passed, "failed": report.failed()})


COMMANDS = {"poiseuille": run_poiseuille, "solve": run_solve, "decay-study": run_decay,
            "verify": run_verify}


def run_scenario(command, cfg, out, seed=0):
    """Run one subcommand on a validated config; returns an Outcome."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        return COMMANDS[command](cfg, out, seed)
    except ConfigError as exc:
        return Outcome(EXIT_CONFIG, {"error": str(exc)})


def _sweep_worker(args):
    command, cfg, out, seed = args
    res = run_scenario(command, cfg, out, seed)
    return res.code, res.summary


def run_sweep(command, cfg, out, seed=0, jobs=1):
    base = {k: v for k, v in cfg.items() if k != "sweep"}
    tasks = []
    for i, over in enumerate(cfg["sweep"]):
        scen = validate_config(_merge(base, over))
        tasks.append((command, scen, Path(out) / f"scenario_{i:02d}", seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            results = list(ex.map(_sweep_worker, tasks))
    else:
        results = [_sweep_worker(t) for t in tasks]
    summary = {"scenarios": [{"index": i, "exit_code": c, "summary": s}
                             for i, (c, s) in enumerate(results)]}
    io.write_json(Path(out) / "sweep.json", summary, io.environment_echo(cfg, None, seed=seed))
    return Outcome(max(c for c, _ in results), summary)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="YAML scenario file")
    common.add_argument("--out", default=None, help="output directory (overrides 'output')")
    common.add_argument("--seed", type=int, default=0, help="seed for randomized starts (u64)")
    common.add_argument("--jobs", type=int, default=1, help="parallel scenarios in sweep mode")
    common.add_argument("-v", "--verbose", action="store_true")
    parser = argparse.ArgumentParser(prog="slipflow", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    helps = {"poiseuille": "slip Poiseuille profile and closed-form comparison",
             "solve": "Navier-Stokes solve (single flux or continuation list)",
             "decay-study": "tail-energy decay fits over two truncations",
             "verify": "full diagnostics report"}
    for name, h in helps.items():
        sub.add_parser(name, parents=[common], help=h)
    return parser


def main(argv=None):
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if not 0 <= args.seed < 2**64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out or cfg["output"])
    if cfg["sweep"]:
        res = run_sweep(args.command, cfg, out, args.seed, args.jobs)
    else:
        res = run_scenario(args.command, cfg, out, args.seed)
    if res.code == EXIT_CONFIG:
        print(f"config error: {res.summary.get('error')}", file=sys.stderr)
    else:
        status = {EXIT_OK: "ok", EXIT_NONCONVERGED: "solver did not converge",
                  EXIT_DIAGNOSTIC: "diagnostic failure"}[res.code]
        print(f"slipflow {args.command}: {status} (outputs in {out})")
    return res.code


if __name__ == "__main__":
    sys.exit(main())
