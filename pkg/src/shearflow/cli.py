"""Command-line experiment harness.

Verbs: ``run``, ``sweep``, ``ineq`` and ``carrier-check``, each reading a JSON
configuration with an explicit ``"version"``.  Exit status is 0 on success,
1 on a configuration error and 2 when a nonlinear solve does not converge
(artifacts are still written).
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, GeometryError, NonConvergence, ShearflowError

logger = logging.getLogger("shearflow")

CONFIG_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2

_TOP_KEYS = {"version", "domain", "law", "alpha", "mesh", "solver", "benchmark", "diagnostics",
             "continuation", "sweep", "ineq", "carrier_check", "seed", "output"}
_SOLVER_KEYS = {"theta", "tol_abs", "tol_rel", "max_iter", "switch_rel", "convection",
                "linear_tol"}


# ---------------------------------------------------------------------------
# configuration


def _reject_unknown(section, allowed, prefix):
    if not isinstance(section, dict):
        raise ConfigError(prefix or "config", "expected an object")
    for key in sorted(set(section) - set(allowed)):
        raise ConfigError(f"{prefix}.{key}" if prefix else key, "unknown key")


def _number(d, key, prefix, default=None, positive=False, minimum=None, required=False):
    name = f"{prefix}.{key}" if prefix else key
    if key not in d or d[key] is None:
        if required:
            raise ConfigError(name, "missing")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(name, f"expected a finite number, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(name, f"must be positive, got {v}")
    if minimum is not None and v < minimum:
        raise ConfigError(name, f"must be >= {minimum}, got {v}")
    return float(v)


def _number_list(d, key, prefix, **kw):
    name = f"{prefix}.{key}"
    v = d.get(key)
    if v is None:
        return None
    if not isinstance(v, list) or not v:
        raise ConfigError(name, "expected a nonempty list")
    return [_number({key: x}, key, prefix, **kw) for x in v]


@dataclass
class ExperimentConfig:
    """Validated experiment description."""

    raw: dict
    domain: object = None
    p: float = 3.0
    T: float = 8.0
    alpha: float = 0.0
    h: float = 0.1
    solver: dict = field(default_factory=dict)
    benchmark: str = None
    dt: float = 0.125
    fit_window: tuple = None
    continuation: dict = None
    sweep: dict = None
    ineq: dict = None
    carrier_check: dict = None
    seed: int = 0
    output: str = "out"


def parse_config(raw, need_domain=True):
    """Validate a configuration document; every check runs before any solve."""
    from .geometry import build_outlet_domain

    _reject_unknown(raw, _TOP_KEYS, "")
    if "version" not in raw:
        raise ConfigError("version", "missing")
    if raw["version"] != CONFIG_VERSION:
        raise ConfigError("version", f"unsupported version {raw['version']!r}")
    cfg = ExperimentConfig(raw=raw)

    if "domain" in raw:
        dom = raw["domain"]
        _reject_unknown(dom, {"profile", "lower", "l1", "l2", "sample_range"}, "domain")
        for key in ("profile", "l1", "l2"):
            if key not in dom:
                raise ConfigError(f"domain.{key}", "missing")
        l1 = _number(dom, "l1", "domain", positive=True)
        l2 = _number(dom, "l2", "domain", positive=True)
        if l1 > l2:
            raise ConfigError("l1", f"l1 = {l1} exceeds l2 = {l2}")
        try:
            cfg.domain = build_outlet_domain(dom)
        except GeometryError as exc:
            raise ConfigError("domain.profile", str(exc)) from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise ConfigError("domain.profile", str(exc)) from exc
    elif need_domain:
        raise ConfigError("domain", "missing")

    law = raw.get("law", {})
    _reject_unknown(law, {"p", "T"}, "law")
    cfg.p = _number(law, "p", "law", default=3.0, minimum=2.0)
    cfg.T = _number(law, "T", "law", default=8.0, positive=True)
    cfg.alpha = _number(raw, "alpha", "", default=None)

    mesh_cfg = raw.get("mesh", {})
    _reject_unknown(mesh_cfg, {"h"}, "mesh")
    cfg.h = _number(mesh_cfg, "h", "mesh", default=0.1, positive=True)
    if cfg.domain is not None and not cfg.h < cfg.domain.l1 / 4:
        raise ConfigError("mesh.h", f"h must be below l1/4 = {cfg.domain.l1 / 4}")

    solver = raw.get("solver", {})
    _reject_unknown(solver, _SOLVER_KEYS, "solver")
    for key in _SOLVER_KEYS - {"convection", "max_iter", "theta"}:
        if key in solver:
            _number(solver, key, "solver", positive=True)
    if "theta" in solver and solver["theta"] is not None:
        th = _number(solver, "theta", "solver", positive=True)
        if th > 1:
            raise ConfigError("solver.theta", "must lie in (0, 1]")
    if "max_iter" in solver:
        mi = solver["max_iter"]
        if isinstance(mi, bool) or not isinstance(mi, int) or mi < 1:
            raise ConfigError("solver.max_iter", "expected a positive integer")
    if "convection" in solver and not isinstance(solver["convection"], bool):
        raise ConfigError("solver.convection", "expected true or false")
    cfg.solver = dict(solver)

    bench = raw.get("benchmark")
    if bench not in (None, "poiseuille"):
        raise ConfigError("benchmark", f"unknown benchmark {bench!r}")
    cfg.benchmark = bench
    if bench == "poiseuille" and cfg.domain is not None:
        from .geometry import ConstantProfile
        d = cfg.domain
        if not (isinstance(d.upper, ConstantProfile) and np.allclose(d.width(0.0), 1.0)):
            raise ConfigError("benchmark", "the p-Poiseuille benchmark needs a unit straight channel")

    diag = raw.get("diagnostics", {})
    _reject_unknown(diag, {"dt", "fit_window"}, "diagnostics")
    cfg.dt = _number(diag, "dt", "diagnostics", default=0.125, positive=True)
    k = 1.0 / cfg.dt
    if abs(k - round(k)) > 1e-9:
        raise ConfigError("diagnostics.dt", "spacing must divide 1")
    if diag.get("fit_window") is not None:
        fw = diag["fit_window"]
        if not (isinstance(fw, list) and len(fw) == 2 and fw[0] < fw[1]):
            raise ConfigError("diagnostics.fit_window", "expected [lo, hi] with lo < hi")
        cfg.fit_window = (float(fw[0]), float(fw[1]))

    if raw.get("continuation") is not None:
        cont = raw["continuation"]
        _reject_unknown(cont, {"schedule", "t"}, "continuation")
        sched = _number_list(cont, "schedule", "continuation", positive=True)
        if sched is None:
            raise ConfigError("continuation.schedule", "missing")
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ConfigError("continuation.schedule", "must be strictly increasing")
        t = _number(cont, "t", "continuation", positive=True, required=True)
        if any(T < t + 1 for T in sched):
            raise ConfigError("continuation.schedule", "every T_k must satisfy T_k >= t + 1")
        cfg.continuation = {"schedule": sched, "t": t}

    if raw.get("sweep") is not None:
        sw = raw["sweep"]
        _reject_unknown(sw, {"alpha", "p", "T"}, "sweep")
        grid = {"alpha": _number_list(sw, "alpha", "sweep"),
                "p": _number_list(sw, "p", "sweep", minimum=2.0),
                "T": _number_list(sw, "T", "sweep", positive=True)}
        cfg.sweep = grid

    if raw.get("ineq") is not None:
        iq = raw["ineq"]
        _reject_unknown(iq, {"mesh_h", "monotonicity", "korn", "poincare", "bogovskii"}, "ineq")
        cfg.ineq = iq
        hs = _number_list(iq, "mesh_h", "ineq", positive=True)
        if hs is not None:
            cfg.ineq = dict(iq, mesh_h=hs)
        for name, keys in (("monotonicity", {"p", "samples"}), ("korn", {"q", "trials"}),
                           ("poincare", {"q", "gamma_fraction"}),
                           ("bogovskii", {"q", "trials"})):
            if name in iq:
                _reject_unknown(iq[name], keys, f"ineq.{name}")

    if raw.get("carrier_check") is not None:
        cc = raw["carrier_check"]
        _reject_unknown(cc, {"sections", "n_points", "t", "p", "h"}, "carrier_check")
        cfg.carrier_check = cc

    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or seed < 0:
        raise ConfigError("seed", "expected a nonnegative integer")
    cfg.seed = seed
    out = raw.get("output", "out")
    if not isinstance(out, str):
        raise ConfigError("output", "expected a path string")
    cfg.output = out

    if cfg.alpha is None:
        if cfg.benchmark == "poiseuille":
            from .solver import poiseuille_flux
            cfg.alpha = poiseuille_flux(cfg.p)
        else:
            cfg.alpha = 0.0
    return cfg


def load_config(path, need_domain=True):
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ConfigError("config", f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("config", f"invalid JSON: {exc}") from exc
    return parse_config(raw, need_domain)


def solver_config(cfg, p=None, T=None):
    from .fem.assembly import PowerLaw
    from .solver import SolverConfig
    kw = {k: v for k, v in cfg.solver.items()}
    return SolverConfig(law=PowerLaw(cfg.p if p is None else p, cfg.T if T is None else T), **kw)


# ---------------------------------------------------------------------------
# run


def _measured_flux(sol, T):
    xs = [-T / 2, 0.0, T / 2]
    vals = [sol.flux(x) for x in xs]
    return vals[1], dict(zip(["-T/2", "0", "T/2"], vals))


def solve_point(cfg, alpha, p, T):
    """One truncated solve plus diagnostics.

    Returns ``(solution, series, summary, status)`` where ``status`` is
    ``"ok"`` or ``"nonconvergence"``.
    """
    from .carrier import build_carrier_2d
    from .geometry import mesh as make_mesh, truncate
    from .solver import poiseuille_forcing, poiseuille_profile, lp_error, solve_truncated

    scfg = solver_config(cfg, p, T)
    carrier = build_carrier_2d(cfg.domain, alpha, seed=cfg.seed)
    m = make_mesh(truncate(cfg.domain, T), cfg.h)
    bf = bs = None
    if cfg.benchmark == "poiseuille":
        bf, bs = poiseuille_forcing(p, T)
    status = "ok"
    message = ""
    try:
        sol = solve_truncated(m, carrier, scfg, body_force=bf, body_stress=bs)
    except NonConvergence as exc:
        sol = exc.solution
        status = "nonconvergence"
        message = str(exc)
    series, summary = summarize(cfg, sol, T)
    summary.update({"status": status, "message": message, "alpha": alpha, "p": p, "T": T,
                    "h": cfg.h})
    if cfg.benchmark == "poiseuille":
        V, _ = poiseuille_profile(p)

        def exact(X):
            return np.column_stack([V(X[:, 1]), np.zeros(len(X))])

        window = max(T - 3.0, min(1.0, T / 2))
        summary["benchmark"] = {"kind": "poiseuille", "window": window,
                                "lp_error": lp_error(sol, exact, p, window),
                                "exact_flux": float(alpha)}
    return sol, series, summary, status


def summarize(cfg, sol, T):
    from .diagnostics import (comparison_check, diagnostics_series, fit_comparison_constants,
                              shear_bound_check)

    t_max = math.floor(T / cfg.dt + 1e-9) * cfg.dt
    series = diagnostics_series(sol, cfg.dt, cfg.fit_window, t_max=t_max)
    yfull = series.meta["y_grid"]
    fc = fit_comparison_constants(series.t, series.z, series.zprime, sol.law.p)
    verdict = comparison_check(series.t, series.z, fc["psi"], fc["delta"], fc["phi"],
                               fc["phi_prime"], zprime=series.zprime)
    flux, flux_sections = _measured_flux(sol, T)
    hist = sol.history
    shear = shear_bound_check(sol, window=(0.0, max(T - 2.0, 0.0)))
    summary = {
        "converged": sol.converged,
        "n_iter": sol.n_iter,
        "final_residual": hist[-1]["residual"] if hist else 0.0,
        "n_dofs": sol.space.n_dofs,
        "flux": flux,
        "flux_sections": flux_sections,
        "divergence_residual": sol.divergence_residual(),
        "pressure_mean": sol.pressure_mean(),
        "fits": {"c1": series.c1, "c2": series.c2, "kappa": series.kappa,
                 "fit_residual": series.fit_residual},
        "verdicts": {"y_monotone": bool(np.all(np.diff(yfull) >= -1e-12 * (1 + np.abs(yfull[1:])))),
                     "sandwich": series.sandwich_holds(),
                     "comparison": verdict.to_dict(),
                     "comparison_constants": {"c1": fc["c1"], "c3": fc["c3"],
                                              "delta": fc["delta"]}},
        "shear_bound": shear.to_dict(),
    }
    return series, summary


def _write_run_artifacts(out, sol, series, summary, history):
    from .io import export_vtk, write_csv, write_json, write_jsonl
    out.mkdir(parents=True, exist_ok=True)
    export_vtk(sol, out / "solution.vtk")
    write_csv(out / "diagnostics.csv", series.columns())
    write_jsonl(out / "iterations.jsonl", history)
    write_json(out / "summary.json", summary)


def cmd_run(cfg, out):
    from .solver import continuation_run
    sol, series, summary, status = solve_point(cfg, cfg.alpha, cfg.p, cfg.T)
    history = list(sol.history)
    if cfg.continuation is not None:
        scfg = replace(solver_config(cfg), schedule=tuple(cfg.continuation["schedule"]))
        logs = []
        rep = continuation_run(cfg.domain, cfg.alpha, scfg, cfg.continuation["t"], cfg.h,
                               on_stage=lambda k, s: logs.extend(s.history))
        history += [dict(r, stage=f"continuation-{r['stage']}") for r in logs]
        summary["continuation"] = rep.to_dict()
        if rep.error is not None:
            status = "nonconvergence"
    _write_run_artifacts(out, sol, series, summary, history)
    return EXIT_OK if status == "ok" else EXIT_NONCONVERGENCE


# ---------------------------------------------------------------------------
# sweep

SWEEP_COLUMNS = ["alpha", "p", "T", "status", "flux", "c1", "c2", "kappa", "fit_residual",
                 "n_iter", "message"]


def _sweep_point(args):
    cfg, alpha, p, T = args
    row = {"alpha": alpha, "p": p, "T": T, "status": "failed", "flux": 0.0, "c1": 0.0,
           "c2": 0.0, "kappa": 0.0, "fit_residual": 0.0, "n_iter": 0, "message": ""}
    try:
        _, _, summ, status = solve_point(cfg, alpha, p, T)
        row.update(status=status, flux=summ["flux"], c1=summ["fits"]["c1"],
                   c2=summ["fits"]["c2"], kappa=summ["fits"]["kappa"],
                   fit_residual=summ["fits"]["fit_residual"], n_iter=summ["n_iter"],
                   message=summ["message"])
    except ShearflowError as exc:
        row["message"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep_grid(cfg):
    grid = cfg.sweep or {}
    alphas = sorted(grid.get("alpha") or [cfg.alpha])
    ps = sorted(grid.get("p") or [cfg.p])
    Ts = sorted(grid.get("T") or [cfg.T])
    return list(itertools.product(alphas, ps, Ts))


def cmd_sweep(cfg, out, threads=1):
    from .diagnostics import kappa_exponent
    from .io import write_csv, write_json
    points = sweep_grid(cfg)
    if not points:
        raise ConfigError("sweep", "empty grid")
    for T in {T for _, _, T in points}:
        if T < 3:
            raise ConfigError("sweep.T", "truncation lengths below 3 leave no fit window")
    args = [(cfg, a, p, T) for a, p, T in points]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_sweep_point, args))
    else:
        rows = [_sweep_point(a) for a in args]
    out.mkdir(parents=True, exist_ok=True)
    write_csv(out / "sweep.csv", {c: [r[c] for r in rows] for c in SWEEP_COLUMNS})
    groups = {}
    for r in rows:
        groups.setdefault((r["p"], r["T"]), []).append(r)
    studies = []
    for (p, T), rs in sorted(groups.items()):
        ok = [r for r in rs if r["status"] != "failed"]
        al = [abs(r["alpha"]) for r in ok]
        ka = [r["kappa"] for r in ok]
        order = np.argsort(al, kind="stable")
        ka_sorted = [ka[i] for i in order]
        gamma, const = kappa_exponent(al, ka)
        studies.append({"p": p, "T": T, "alpha": [al[i] for i in order], "kappa": ka_sorted,
                        "kappa_increasing": bool(all(b > a for a, b in zip(ka_sorted, ka_sorted[1:]))),
                        "gamma": gamma if math.isfinite(gamma) else None})
    write_json(out / "summary.json", {"n_points": len(rows), "rows": rows, "kappa_studies": studies})
    return EXIT_NONCONVERGENCE if any(r["status"] == "nonconvergence" for r in rows) else EXIT_OK


# ---------------------------------------------------------------------------
# inequality lab


def cmd_ineq(cfg, out):
    from .geometry import unit_square_mesh
    from .io import write_json
    from .ineqlab import (bogovskii_constant, korn_constant, monotonicity_ratio,
                          poincare_constant)
    iq = cfg.ineq or {}
    hs = iq.get("mesh_h") or [0.25, 0.125]
    seed = cfg.seed
    reports = []
    mono = iq.get("monotonicity", {})
    for p in mono.get("p", [2.0, 4.0]):
        reports.append(monotonicity_ratio(float(p), int(mono.get("samples", 100_000)), seed).to_dict())
    korn = iq.get("korn", {})
    pc = iq.get("poincare", {})
    bog = iq.get("bogovskii", {})
    for h in hs:
        m = unit_square_mesh(h)
        for q in korn.get("q", [2.0, 3.0]):
            reports.append(korn_constant(m, float(q), int(korn.get("trials", 40)), seed).to_dict())
        frac = float(pc.get("gamma_fraction", 1.0))
        for q in pc.get("q", [2.0]):
            reports.append(poincare_constant(
                m, lambda X, f=frac: (X[:, 1] < 1e-12) & (X[:, 0] <= f + 1e-12),
                float(q), seed=seed).to_dict())
        for q in bog.get("q", [2.0]):
            reports.append(bogovskii_constant(m, float(q), int(bog.get("trials", 20)), seed).to_dict())
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "summary.json", {"reports": reports})
    return EXIT_OK


# ---------------------------------------------------------------------------
# carrier check


def cmd_carrier_check(cfg, out):
    from .carrier import (build_carrier_2d, distance_bound_constants, verify_flux,
                          verify_lemma_a_estimates)
    from .geometry import cross_section, mesh as make_mesh, truncate
    from .io import write_json, write_vtk
    cc = cfg.carrier_check or {}
    dom = cfg.domain
    alpha = cfg.alpha if cfg.alpha is not None else 1.0
    car = build_carrier_2d(dom, alpha, seed=cfg.seed)
    sections = cc.get("sections", [-8.0, -3.0, -1.0, -0.5, 0.25, 0.5, 1.0, 2.0, 3.0, 8.0])
    flux = []
    for x1 in sections:
        sec = cross_section(dom, 2 if x1 >= 0 else 1, float(x1))
        est = verify_flux(car, sec)
        flux.append({"x1": float(x1), "flux": est.value, "error": est.error,
                     "deviation": abs(est.value - alpha)})
    rng = np.random.default_rng(cfg.seed)
    n = int(cc.get("n_points", 10_000))
    x1 = rng.uniform(-10, 10, n)
    f1, f2 = dom.lower.value(x1), dom.upper.value(x1)
    x2 = f1 + (0.02 + 0.96 * rng.uniform(0, 1, n)) * (f2 - f1)
    pts = np.column_stack([x1, x2])
    div = _fd_divergence(car, pts)
    scale = max(car.bounds.get("sup_grad_a", 0.0), 1e-300)
    dist = distance_bound_constants(dom, pts[:500])
    p = float(cc.get("p", 3.0))
    h = float(cc.get("h", min(0.1, dom.l1 / 8)))
    lemma = {}
    for t in cc.get("t", [4.0, 8.0, 16.0]):
        m = make_mesh(truncate(dom, float(t)), h)
        lemma[str(float(t))] = verify_lemma_a_estimates(car, m, p, float(t))
    summary = {"alpha": alpha, "bounds": car.bounds, "flux": flux,
               "max_flux_deviation": max(f["deviation"] for f in flux),
               "divergence_fd_scaled": float(np.max(np.abs(div)) / scale) if alpha else 0.0,
               "divergence_analytic": float(np.max(np.abs(car.divergence(pts)))),
               "distance": dist, "lemma_estimates": lemma}
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "summary.json", summary)
    m = make_mesh(truncate(dom, 4.0), h)
    a, _ = car.evaluate(m.vertices)
    write_vtk(out / "carrier.vtk", m.vertices, m.triangles, {"carrier": a})
    return EXIT_OK


def _fd_divergence(carrier, pts, eps=1e-6):
    e1 = np.array([eps, 0.0])
    e2 = np.array([0.0, eps])
    return ((carrier(pts + e1)[:, 0] - carrier(pts - e1)[:, 0])
            + (carrier(pts + e2)[:, 1] - carrier(pts - e2)[:, 1])) / (2 * eps)


# ---------------------------------------------------------------------------
# entry point


def build_parser():
    ap = argparse.ArgumentParser(prog="shearflow", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="verb", required=True)
    for verb in ("run", "sweep", "ineq", "carrier-check"):
        sp_ = sub.add_parser(verb)
        sp_.add_argument("config")
        sp_.add_argument("--out", default=None, help="output directory")
        sp_.add_argument("--seed", type=int, default=None)
        sp_.add_argument("--threads", type=int, default=1)
        sp_.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("config error: threads: must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(args.config, need_domain=args.verb != "ineq")
        if args.seed is not None:
            cfg.seed = args.seed
        out = Path(args.out if args.out is not None else cfg.output)
        if args.verb == "run":
            return cmd_run(cfg, out)
        if args.verb == "sweep":
            return cmd_sweep(cfg, out, args.threads)
        if args.verb == "ineq":
            return cmd_ineq(cfg, out)
        return cmd_carrier_check(cfg, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
