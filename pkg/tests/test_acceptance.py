"""Acceptance criteria 1-10.

Each check returns ``(passed, detail)``; the pytest wrappers print one
``criterion N: PASS|FAIL`` line and then assert.  Run the file directly to get
the ten lines without pytest.
"""
import json
import math
import sys
import time

import numpy as np
import pytest

from shearflow.carrier import build_carrier_2d, verify_flux, verify_lemma_a_estimates
from shearflow.diagnostics import (PsiSpec, blowup_rate, comparison_check, diagnostics_series,
                                   dirichlet_energy, slice_series, y_series, z_series)
from shearflow.fem import PowerLaw, TaylorHoodSpace
from shearflow.geometry import cross_section, mesh, straight_channel, truncate, unit_square_mesh, \
    wavy_channel
from shearflow.ineqlab import (bogovskii_constant, korn_constant, monotonicity_ratio,
                               poincare_constant)
from shearflow.solver import (SolverConfig, continuation_run, lp_error, poiseuille_flux,
                              poiseuille_forcing, poiseuille_profile, probe_uniqueness,
                              random_initial_guess, solve_truncated)

SQRT2_10 = math.sqrt(2) / 10


def _fd_divergence(car, pts, eps=1e-6):
    e1, e2 = np.array([eps, 0.0]), np.array([0.0, eps])
    return ((car(pts + e1)[:, 0] - car(pts - e1)[:, 0])
            + (car(pts + e2)[:, 1] - car(pts - e2)[:, 1])) / (2 * eps)


def _interior(dom, rng, n, reach=10.0, margin=0.01):
    x1 = rng.uniform(-reach, reach, n)
    f1, f2 = dom.lower.value(x1), dom.upper.value(x1)
    x2 = f1 + (margin + (1 - 2 * margin) * rng.uniform(0, 1, n)) * (f2 - f1)
    return np.column_stack([x1, x2])


# 1 -------------------------------------------------------------------------


def criterion_1():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    sections = [-9.0, -6.0, -3.5, -1.2, -0.4, 0.0, 0.7, 2.5, 5.1, 9.3]
    flux_err = div_err = homog_err = 0.0
    for dom in (straight_channel(), wavy_channel()):
        alpha = 0.37
        car = build_carrier_2d(dom, alpha)
        for x1 in sections:
            est = verify_flux(car, cross_section(dom, 2 if x1 >= 0 else 1, x1))
            flux_err = max(flux_err, abs(est.value - alpha))
        pts = _interior(dom, rng, 10_000)
        div_err = max(div_err, np.max(np.abs(_fd_divergence(car, pts)))
                      / car.bounds["sup_grad_a"])
        a1, g1 = build_carrier_2d(dom, 1.0, n_samples=10).evaluate(pts)
        a3, g3 = build_carrier_2d(dom, -2.5, n_samples=10).evaluate(pts)
        homog_err = max(homog_err, np.max(np.abs(a3 + 2.5 * a1)) / np.max(np.abs(a1)),
                        np.max(np.abs(g3 + 2.5 * g1)) / np.max(np.abs(g1)))
    spread = 0.0
    for dom in (straight_channel(), wavy_channel()):
        car = build_carrier_2d(dom, 1.0)
        c_ii = [verify_lemma_a_estimates(car, mesh(truncate(dom, t), 0.1), 3.0, t)["C_ii"]
                for t in (4.0, 8.0, 16.0)]
        spread = max(spread, max(c_ii) / min(c_ii) - 1)
    elapsed = time.perf_counter() - start
    ok = (flux_err <= 1e-9 and div_err <= 1e-6 and homog_err <= 1e-15 and spread <= 0.10
          and elapsed <= 10.0)
    return ok, (f"flux err {flux_err:.2e}, scaled div {div_err:.2e}, homogeneity {homog_err:.1e}, "
                f"C_ii spread {spread:.2%}, {elapsed:.1f}s")


# 2 -------------------------------------------------------------------------


def criterion_2():
    p, T, window = 3.0, 2.0, 1.0
    dom = straight_channel()
    bf, bs = poiseuille_forcing(p, T)
    V, _ = poiseuille_profile(p)
    exact = lambda X: np.column_stack([V(X[:, 1]), np.zeros(len(X))])
    car = build_carrier_2d(dom, poiseuille_flux(p))
    errs, fluxes, dofs, times = [], [], [], []
    for h in (0.1, 0.05, 0.025):
        start = time.perf_counter()
        sol = solve_truncated(mesh(truncate(dom, T), h), car, SolverConfig(PowerLaw(p, T)),
                              body_force=bf, body_stress=bs)
        times.append(time.perf_counter() - start)
        errs.append(lp_error(sol, exact, p, window))
        fluxes.append(sol.flux(0.0))
        dofs.append(sol.space.n_dofs)
    rates = [math.log2(errs[k] / errs[k + 1]) for k in range(2)]
    flux_dev = abs(fluxes[-1] - SQRT2_10) / SQRT2_10
    ok = all(r >= 1.0 for r in rates) and flux_dev <= 0.01 and times[-1] <= 120
    return ok, (f"L^p errors {', '.join(f'{e:.3e}' for e in errs)}, rates "
                f"{', '.join(f'{r:.2f}' for r in rates)}, flux {fluxes[-1]:.7f} "
                f"({flux_dev:.2%} off), finest {dofs[-1]} dofs in {times[-1]:.0f}s")


# 3 and 4 -------------------------------------------------------------------

_T24 = {}


def _t24_solution():
    if "sol" not in _T24:
        dom = straight_channel()
        start = time.perf_counter()
        sol = solve_truncated(mesh(truncate(dom, 24.0), 0.1), build_carrier_2d(dom, 0.1),
                              SolverConfig(PowerLaw(3.0, 24.0)))
        ser = diagnostics_series(sol, 0.125, (2.0, 22.0))
        _T24.update(sol=sol, series=ser, elapsed=time.perf_counter() - start)
    return _T24


def criterion_3():
    run = _t24_solution()
    ser = run["series"]
    y = ser.meta["y_grid"]
    monotone = bool(np.all(np.diff(y) >= 0))
    sandwich = ser.sandwich_holds()
    ok = monotone and sandwich and ser.fit_residual <= 0.10 and run["elapsed"] <= 300
    return ok, (f"monotone {monotone}, sandwich {sandwich}, y ~ {ser.c1:.4g} t + {ser.c2:.4g} "
                f"residual {ser.fit_residual:.2e}, {run['elapsed']:.0f}s")


def criterion_4():
    run = _t24_solution()
    sol = run["sol"]
    ts = np.arange(2.0, 23.0)
    slices = np.concatenate([slice_series(sol, 1, ts), slice_series(sol, 2, ts)])
    variation = float(np.ptp(slices) / slices.max())
    dom = straight_channel()
    kappas = []
    for alpha in (0.0, 0.05, 0.1, 0.2):
        s = solve_truncated(mesh(truncate(dom, 8.0), 0.1), build_carrier_2d(dom, alpha),
                            SolverConfig(PowerLaw(3.0, 8.0)))
        kappas.append(diagnostics_series(s).kappa)
    increasing = all(b > a for a, b in zip(kappas[1:], kappas[2:]))
    ok = variation <= 0.15 and increasing and kappas[0] == 0.0
    return ok, (f"interior slice variation {variation:.2e}, kappa(0, 0.05, 0.1, 0.2) = "
                f"{', '.join(f'{k:.4g}' for k in kappas)}")


# 5 -------------------------------------------------------------------------


def criterion_5():
    cfg = SolverConfig(PowerLaw(3.0, 6.0), schedule=(6.0, 10.0, 16.0, 24.0))
    rep = continuation_run(straight_channel(), 0.1, cfg, 4.0, 0.1)
    d = rep.deltas
    decreasing = rep.error is None and len(d) == 3 and all(b <= a for a, b in zip(d, d[1:]))
    ratio = d[-1] / d[0] if d and d[0] > 0 else float("nan")
    ok = decreasing and ratio <= 0.1
    return ok, (f"deltas {', '.join(f'{x:.4e}' for x in d)}, decreasing {decreasing}, "
                f"final/first {ratio:.3f} (needs <= 0.1)")


# 6 -------------------------------------------------------------------------


def _synthetic_case(rng):
    """A comparison-lemma instance whose hypotheses hold by construction."""
    k = int(rng.integers(1, 4))
    psi = PsiSpec(tuple(rng.uniform(0.1, 3.0, k)), tuple(np.sort(rng.uniform(0.3, 3.0, k))))
    delta = float(rng.uniform(0.05, 0.95))
    t0, T = 1.0, float(rng.uniform(5, 40))
    slope = float(rng.uniform(0.01, 5))
    # phi = slope t + b with b large enough for phi >= Psi(phi') / delta from t0 on
    b = max(float(psi(slope)) / delta - slope * t0, 0.0) + float(rng.uniform(0, 2))
    lam = float(rng.uniform(0.0, 1.0 - delta))
    c = float(rng.uniform(0, 0.5))
    t = np.linspace(t0, T, int(rng.integers(50, 400)))
    phi = slope * t + b
    z = lam * phi - c * np.exp(-t)
    zp = lam * slope + c * np.exp(-t)
    return t, z, zp, psi, delta, (lambda s: slope * np.asarray(s) + b), \
        (lambda s: np.full_like(np.asarray(s, dtype=float), slope))


def criterion_6():
    rng = np.random.default_rng(2024)
    held = 0
    for _ in range(100):
        t, z, zp, psi, delta, phi, dphi = _synthetic_case(rng)
        v = comparison_check(t, z, psi, delta, phi, dphi, zprime=zp)
        held += bool(v.holds and v.hypotheses_hold)
    t = np.arange(1.0, 33.0, 0.25)
    z = t**2 / 4
    psi = PsiSpec.power(2.0)
    identity = bool(np.array_equal(psi(t / 2), z))
    margin = comparison_check(t, z, psi, 0.5, np.zeros_like(t), np.zeros_like(t),
                              zprime=t / 2).margins["z <= Psi(z') + (1-delta) phi"]
    rate_power = blowup_rate(t, z, "power", m=2.0, psi=psi, zprime=t / 2)
    te = np.linspace(0.0, 30.0, 301)
    rate_exp = blowup_rate(te, np.exp(te), "linear", c=1.0)
    ok = (held == 100 and identity and margin == 0.0 and abs(rate_power - 0.25) <= 1e-12
          and abs(rate_exp - 1.0) <= 1e-12)
    return ok, (f"{held}/100 synthetic cases hold, identity exact {identity} (margin {margin}), "
                f"power rate {rate_power!r}, exponential rate {rate_exp!r}")


# 7 -------------------------------------------------------------------------


def _poincare_oracle(h=1 / 24, n_modes=20, starts=12, seed=0):
    """Fine-grid generalized eigenpairs plus a direct constrained minimization."""
    import scipy.linalg as sla
    from scipy.optimize import minimize
    from shearflow.fem.assembly import scalar_matrices
    from shearflow.ineqlab import _trace_functional, boundary_part

    space = TaylorHoodSpace(unit_square_mesh(h))
    K, M = scalar_matrices(space)
    lam, phi = sla.eigh(K.toarray(), M.toarray(), subset_by_index=[0, n_modes - 1])
    lam[0] = 0.0
    ell = phi.T @ _trace_functional(space, boundary_part(space.mesh, lambda X: X[:, 1] < 1e-12))
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(starts):
        c0 = rng.normal(size=n_modes)
        c0 *= np.sign(c0 @ ell) / np.linalg.norm(c0)
        res = minimize(lambda c: np.sqrt(max(c @ (lam * c), 0.0)) + c @ ell, c0, method="SLSQP",
                       options={"ftol": 1e-14, "maxiter": 400},
                       constraints=[{"type": "eq", "fun": lambda c: c @ c - 1},
                                    {"type": "ineq", "fun": lambda c: c @ ell}])
        best = min(best, res.fun)
    return 1.0 / best


def criterion_7():
    mono2 = monotonicity_ratio(2.0, 100_000, seed=0)
    mono4 = monotonicity_ratio(4.0, 100_000, seed=0)
    floor = 0.9 * 2.0 ** (2 - 4)
    korn = [korn_constant(unit_square_mesh(h)).constant for h in (0.25, 0.125)]
    poinc = poincare_constant(unit_square_mesh(0.125), lambda X: X[:, 1] < 1e-12).constant
    oracle = _poincare_oracle()
    bog = [bogovskii_constant(unit_square_mesh(h), trials=20, seed=0).constant
           for h in (0.25, 0.125, 0.0625)]
    bog_spread = max(bog) / min(bog) - 1
    ok = (mono2.extra["all_ones"] and mono4.constant >= floor
          and max(korn) <= math.sqrt(2) + 1e-2
          and abs(poinc / oracle - 1) <= 0.05 and bog_spread <= 0.15)
    return ok, (f"p=2 all ones {mono2.extra['all_ones']}, p=4 floor {mono4.constant:.4f} "
                f"(>= {floor}), Korn {', '.join(f'{k:.6f}' for k in korn)}, Poincare "
                f"{poinc:.5f} vs oracle {oracle:.5f}, Bogovskii "
                f"{', '.join(f'{b:.4f}' for b in bog)} (spread {bog_spread:.1%})")


# 8 -------------------------------------------------------------------------


def criterion_8():
    dom = straight_channel()
    details = []
    ok = True
    for p in (2.0, 3.0, 4.0):
        sol = solve_truncated(mesh(truncate(dom, 6.0), 0.2), build_carrier_2d(dom, 0.0),
                              SolverConfig(PowerLaw(p, 6.0)))
        ser = diagnostics_series(sol)
        cols = ser.columns()
        zero = all(np.all(cols[k] == 0) for k in cols if k != "t")
        zero = zero and ser.c1 == 0 and ser.c2 == 0 and ser.kappa == 0
        ok &= sol.n_iter == 1 and bool(np.all(sol.u == 0)) and zero
        details.append(f"p={p:g}: {sol.n_iter} iteration, diagnostics zero {zero}")
    return ok, "; ".join(details)


# 9 -------------------------------------------------------------------------


def criterion_9():
    dom = straight_channel()
    space = TaylorHoodSpace(mesh(truncate(dom, 4.0), 0.1))
    cfg = SolverConfig(PowerLaw(3.0, 4.0))
    rng = np.random.default_rng(9)
    guesses = [random_initial_guess(space, rng) for _ in range(3)]
    rep = probe_uniqueness(space, build_carrier_2d(dom, 0.05), cfg, guesses)
    dmax = float(rep.distances.max())
    ok = rep.coincide and dmax <= 10 * cfg.tol_abs
    return ok, f"max pairwise |.|_(1,p) distance {dmax:.2e} (bound {10 * cfg.tol_abs:.0e})"


# 10 ------------------------------------------------------------------------


def criterion_10(tmp_dir):
    from pathlib import Path
    from shearflow.cli import main

    tmp = Path(tmp_dir)
    cfg = {"version": 1,
           "domain": {"profile": {"kind": "sine", "mean": 0.75, "amplitude": 0.2},
                      "l1": 1.0, "l2": 2.0},
           "law": {"p": 3, "T": 5}, "alpha": 0.2, "mesh": {"h": 0.2}, "seed": 11}
    sweep = dict(cfg, sweep={"alpha": [0.1, 0.2]})
    (tmp / "run.json").write_text(json.dumps(cfg))
    (tmp / "sweep.json").write_text(json.dumps(sweep))
    codes = []
    for k in ("a", "b"):
        codes.append(main(["run", str(tmp / "run.json"), "--out", str(tmp / f"run_{k}")]))
        codes.append(main(["sweep", str(tmp / "sweep.json"), "--out", str(tmp / f"sweep_{k}")]))
    files = [("run", "summary.json"), ("run", "diagnostics.csv"), ("run", "iterations.jsonl"),
             ("sweep", "sweep.csv"), ("sweep", "summary.json")]
    same = [(tmp / f"{d}_a" / f).read_bytes() == (tmp / f"{d}_b" / f).read_bytes()
            for d, f in files]
    ok = all(c == 0 for c in codes) and all(same)
    return ok, f"exit codes {codes}, {sum(same)}/{len(same)} artifacts byte-identical"


# ---------------------------------------------------------------------------


def _report(n, result):
    ok, detail = result
    print(f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}", flush=True)
    return ok


@pytest.fixture
def report(capsys):
    def _emit(n, result):
        with capsys.disabled():
            print()
            return _report(n, result)
    return _emit


@pytest.mark.parametrize("n", range(1, 10))
def test_criterion(n, report):
    assert report(n, globals()[f"criterion_{n}"]())


def test_criterion_10(report, tmp_path):
    assert report(10, criterion_10(tmp_path))


if __name__ == "__main__":
    import tempfile
    results = []
    for n in range(1, 10):
        results.append(_report(n, globals()[f"criterion_{n}"]()))
    with tempfile.TemporaryDirectory() as d:
        results.append(_report(10, criterion_10(d)))
    sys.exit(0 if all(results) else 1)
