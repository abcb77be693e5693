import math

import numpy as np
import pytest
import scipy.sparse.linalg as sla
from sklearn.base import clone

from shearflow.carrier import build_carrier_2d
from shearflow.errors import DimensionMismatch, NonConvergence, NonZeroMean
from shearflow.fem import FlowProblem, PowerLaw, TaylorHoodSpace
from shearflow.geometry import mesh, truncate, unit_square_mesh
from shearflow.solver import (PowerLawFlowSolver, SolverConfig, bogovskii_solve,
                              continuation_run, lp_error, poiseuille_flux, poiseuille_forcing,
                              poiseuille_profile, probe_uniqueness, random_initial_guess,
                              seminorm_1p, solve_truncated, transfer_velocity, w1q_norm)


# configuration


def test_default_damping_follows_exponent():
    assert SolverConfig(PowerLaw(3.0, 4.0)).theta == pytest.approx(0.5)
    assert SolverConfig(PowerLaw(2.0, 4.0)).theta == pytest.approx(1.0)


def test_schedule_must_increase():
    with pytest.raises(ValueError):
        SolverConfig(PowerLaw(3.0, 4.0), schedule=(6.0, 6.0))


# exact solutions


def test_poiseuille_flux_closed_form():
    assert poiseuille_flux(3.0) == pytest.approx(math.sqrt(2) / 10, rel=1e-14)
    V, _ = poiseuille_profile(3.0)
    x, w = np.polynomial.legendre.leggauss(64)
    assert np.dot(w, V(x / 2)) / 2 == pytest.approx(math.sqrt(2) / 10, rel=1e-4)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.5])
def test_poiseuille_profile_solves_ode(p):
    V, dV = poiseuille_profile(p)
    x = np.linspace(-0.45, 0.45, 19)
    x = x[np.abs(x) > 1e-3]
    e = 1e-5
    flux = lambda s: np.abs(dV(s)) ** (p - 2) * dV(s)
    assert np.allclose(-(flux(x + e) - flux(x - e)) / (2 * e), 1.0, atol=1e-5)
    assert np.allclose(V(np.array([-0.5, 0.5])), 0.0)
    assert np.allclose(dV(x), (V(x + e) - V(x - e)) / (2 * e), atol=1e-7)


def test_p2_poiseuille_is_the_parabola():
    V, _ = poiseuille_profile(2.0)
    x = np.linspace(-0.5, 0.5, 11)
    assert np.allclose(V(x), 0.5 * (0.25 - x**2))


# nonlinear solves


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_zero_flux_converges_in_one_iteration(straight, p):
    m = mesh(truncate(straight, 2.0), 0.2)
    sol = solve_truncated(m, build_carrier_2d(straight, 0.0), SolverConfig(PowerLaw(p, 2.0)))
    assert sol.n_iter == 1 and sol.converged
    assert np.all(sol.x == 0)


def test_manufactured_poiseuille_converges_under_refinement(straight):
    p, T = 3.0, 3.0
    bf, bs = poiseuille_forcing(p, T)
    V, _ = poiseuille_profile(p)
    exact = lambda X: np.column_stack([V(X[:, 1]), np.zeros(len(X))])
    car = build_carrier_2d(straight, poiseuille_flux(p))
    errs = []
    for h in (0.2, 0.1):
        sol = solve_truncated(mesh(truncate(straight, T), h), car, SolverConfig(PowerLaw(p, T)),
                              body_force=bf, body_stress=bs)
        assert sol.converged
        errs.append(lp_error(sol, exact, p, 1.0))
    assert errs[1] < 0.7 * errs[0]
    assert sol.flux(0.0) == pytest.approx(math.sqrt(2) / 10, rel=0.05)


def test_newtonian_limit_matches_linear_solve(straight):
    m = mesh(truncate(straight, 1.0), 0.2)
    car = build_carrier_2d(straight, 0.05)
    law = PowerLaw(2.0, 4.0)
    sol = solve_truncated(m, car, SolverConfig(law, convection=False))
    s = sol.space
    prob = FlowProblem(s, car, law, convection=False)
    free = s.free_dofs()
    A = prob.matrix(np.zeros(s.n_dofs))[free][:, free].tocsc()
    b = -prob.residual(np.zeros(s.n_dofs))[free]
    x = np.zeros(s.n_dofs)
    x[free] = sla.spsolve(A, b)
    nv = s.n_velocity
    assert np.max(np.abs(x[:nv] - sol.x[:nv])) <= 1e-8 * np.max(np.abs(x[:nv]))


def test_solution_is_discretely_divergence_free_with_mean_zero_pressure(wavy):
    m = mesh(truncate(wavy, 1.5), 0.15)
    sol = solve_truncated(m, build_carrier_2d(wavy, 0.3), SolverConfig(PowerLaw(3.0, 1.5)))
    assert sol.divergence_residual() <= 1e-10
    assert abs(sol.pressure_mean()) <= 1e-10
    # the discrete field is only weakly solenoidal, so the section flux carries an O(h^2) error
    assert sol.flux(0.4) == pytest.approx(0.3, rel=2e-2)


def test_nonconvergence_carries_iterate(straight):
    m = mesh(truncate(straight, 1.0), 0.2)
    cfg = SolverConfig(PowerLaw(3.0, 1.0), max_iter=1)
    with pytest.raises(NonConvergence) as info:
        solve_truncated(m, build_carrier_2d(straight, 0.5), cfg)
    assert info.value.solution is not None
    assert len(info.value.history) == 1


def test_history_records_are_complete(straight):
    m = mesh(truncate(straight, 1.0), 0.2)
    sol = solve_truncated(m, build_carrier_2d(straight, 0.2), SolverConfig(PowerLaw(3.0, 1.0)))
    assert {"stage", "iterate", "residual", "damping", "mode"} <= set(sol.history[0])
    assert sol.history[-1]["residual"] <= 1e-9 * sol.history[0]["residual"] + 1e-10


# estimator front end


def test_estimator_fit_predict(straight):
    m = mesh(truncate(straight, 1.0), 0.2)
    est = PowerLawFlowSolver(p=3.0, T=1.0).fit(m, build_carrier_2d(straight, 0.2))
    assert est.converged_
    v = est.predict([[0.0, 0.0], [0.3, 0.2]])
    assert v.shape == (2, 2) and v[0, 0] > 0
    with pytest.raises(DimensionMismatch):
        est.predict([[0.0, 0.0, 0.0]])


def test_estimator_clone_and_params():
    est = PowerLawFlowSolver(p=4.0, T=3.0)
    twin = clone(est)
    assert twin.get_params() == est.get_params()
    assert not hasattr(twin, "solution_")


def test_predict_before_fit_raises():
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        PowerLawFlowSolver().predict([[0.0, 0.0]])


# transfer and continuation


def test_transfer_between_nested_meshes_is_exact(straight):
    small = TaylorHoodSpace(mesh(truncate(straight, 2.0), 0.125))
    big = TaylorHoodSpace(mesh(truncate(straight, 3.0), 0.125))
    f = lambda X: np.column_stack([(4 - X[:, 0] ** 2) * (0.25 - X[:, 1] ** 2), 0 * X[:, 0]])
    u = small.interpolate(f)
    u[small.dirichlet_nodes] = 0
    out = transfer_velocity((small, u), big)
    inner = np.abs(big.node_coords[:, 0]) < 2.0 - 1e-9
    assert np.allclose(out[inner], f(big.node_coords[inner]), atol=1e-14)
    assert np.all(out[~inner] == 0)


def test_seminorm_of_linear_shear():
    s = TaylorHoodSpace(unit_square_mesh(0.25))
    u = s.interpolate(lambda X: np.column_stack([X[:, 1], 0 * X[:, 0]]))
    assert seminorm_1p(s, u, 3.0) == pytest.approx(1.0, rel=1e-12)


def test_zero_flux_continuation(straight):
    cfg = SolverConfig(PowerLaw(3.0, 3.0), schedule=(3.0, 4.0))
    rep = continuation_run(straight, 0.0, cfg, 2.0, 0.2)
    assert rep.deltas == [0.0]
    assert all(s.y == 0 for s in rep.stages)


def test_continuation_rejects_short_stages(straight):
    cfg = SolverConfig(PowerLaw(3.0, 3.0), schedule=(2.5, 4.0))
    with pytest.raises(ValueError):
        continuation_run(straight, 0.1, cfg, 2.0, 0.2)


# divergence equation


def test_bogovskii_zero_data():
    r = bogovskii_solve(unit_square_mesh(0.25), lambda X: 0 * X[:, 0])
    assert np.all(r.w == 0) and r.ratio == 0


def test_bogovskii_rejects_nonzero_mean():
    with pytest.raises(NonZeroMean):
        bogovskii_solve(unit_square_mesh(0.25), lambda X: 1 + 0 * X[:, 0])


def bump_divergence(X):
    # div g for g = (s(x) s(y), 0) with s(t) = sin(pi t)^2
    x, y = X[:, 0], X[:, 1]
    return 2 * np.pi * np.sin(np.pi * x) * np.cos(np.pi * x) * np.sin(np.pi * y) ** 2


@pytest.mark.parametrize("q", [2.0, 3.0])
def test_bogovskii_solves_divergence_of_bump(q):
    ratios = []
    for h in (0.25, 0.125):
        r = bogovskii_solve(unit_square_mesh(h), bump_divergence, q=q)
        assert r.constraint_residual <= 1e-8
        ratios.append(r.ratio)
    assert np.isfinite(ratios).all()
    assert abs(ratios[1] / ratios[0] - 1) <= 0.15


def test_w1q_norm_of_constant_field():
    s = TaylorHoodSpace(unit_square_mesh(0.5))
    w = np.ones((s.n_nodes, 2))
    assert w1q_norm(s, w, 2.0) == pytest.approx(math.sqrt(2.0))


# uniqueness


def test_uniqueness_probe_zero_flux(straight, rng):
    m = mesh(truncate(straight, 1.0), 0.2)
    s = TaylorHoodSpace(m)
    cfg = SolverConfig(PowerLaw(3.0, 1.0))
    rep = probe_uniqueness(s, build_carrier_2d(straight, 0.0), cfg,
                           [None, random_initial_guess(s, rng)])
    assert rep.coincide
    assert rep.distances.max() <= 10 * cfg.tol_abs
