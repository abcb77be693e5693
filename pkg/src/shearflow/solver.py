"""Nonlinear solves, continuation in the truncation length, divergence solver.

The truncated problem is solved by Picard iteration with frozen viscosity
and convecting field, switching to Newton with backtracking once the
relative residual is small.  Linear saddle-point systems are factorized
directly.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import reverse_cuthill_mckee
from scipy.spatial import cKDTree
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import (DimensionMismatch, LinearSolveFailure, NonConvergence, NonZeroMean,
                     ShearflowError)
from .fem.assembly import FlowProblem, PowerLaw, as_space, divergence_matrix, gradient_matrix
from .fem.solution import Solution
from .fem.space import TaylorHoodSpace

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SolverConfig:
    """Settings for one truncated solve and for continuation runs.

    Parameters
    ----------
    law : PowerLaw
        Exponent and viscosity floor.  During continuation the floor is
        replaced by ``1/T_k`` at each stage.
    theta : float or None
        Picard damping in ``(0, 1]``.  ``None`` uses ``1/(p-1)``, which
        removes the amplitude mode of the frozen-viscosity map
        (its amplification factor is ``p - 2``).
    tol_abs, tol_rel : float
        Stop once the residual norm is below ``tol_abs`` or below
        ``tol_rel`` times the initial residual.
    max_iter : int
        Cap on nonlinear iterations.
    switch_rel : float
        Relative residual at which Picard hands over to Newton.
    schedule : tuple of float
        Strictly increasing truncation lengths ``T_k``.
    linear_tol : float
        Accepted relative residual of each direct solve.
    """

    law: PowerLaw = field(default_factory=lambda: PowerLaw(3.0, 10.0))
    theta: float = None
    tol_abs: float = 1e-10
    tol_rel: float = 1e-9
    max_iter: int = 60
    switch_rel: float = 1e-3
    schedule: tuple = ()
    linear_tol: float = 1e-8
    convection: bool = True
    max_backtrack: int = 12
    max_picard: int = 30

    def __post_init__(self):
        if self.theta is None:
            object.__setattr__(self, "theta", min(1.0, 1.0 / (self.law.p - 1)))
        if not 0 < self.theta <= 1:
            raise ValueError(f"theta must lie in (0, 1], got {self.theta}")
        for name in ("tol_abs", "tol_rel", "switch_rel", "linear_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        sched = tuple(float(s) for s in self.schedule)
        if any(b <= a for a, b in zip(sched, sched[1:])):
            raise ValueError("schedule must be strictly increasing")
        object.__setattr__(self, "schedule", sched)


# ---------------------------------------------------------------------------
# linear algebra


class SaddlePointSolver:
    """Direct solver for the Dirichlet-reduced system with a mean multiplier.

    The multiplier row is dense and ruins fill-reducing orderings, so it is
    removed exactly: summing the continuity rows fixes the multiplier
    increment, one pressure unknown is pinned, and the pressure increment is
    shifted afterwards to satisfy the mean constraint.  The remaining system
    is reordered by reverse Cuthill-McKee, which suits long channels.
    """

    def __init__(self, space, free, linear_tol=1e-8):
        self.space = space
        self.free = free
        self.linear_tol = linear_tol
        nv, npr = space.n_velocity, space.n_pressure
        is_p = (free >= nv) & (free < nv + npr)
        self.p_pos = np.flatnonzero(is_p)
        self.lam_pos = len(free) - 1
        self.pin = self.p_pos[0]
        keep = np.ones(len(free), dtype=bool)
        keep[[self.pin, self.lam_pos]] = False
        self.keep = np.flatnonzero(keep)
        w = np.zeros(npr)
        np.add.at(w, space.mesh.triangles, np.einsum("eq,qk->ek", space.weights, space.M))
        self.g = w[free[self.p_pos] - nv]
        self._perm = None

    def reduce(self, A_full):
        return A_full[self.free][:, self.free]

    def solve(self, A, rhs):
        """Solve ``A d = rhs`` for the reduced matrix ``A`` (free x free)."""
        rhs = np.asarray(rhs, dtype=float)
        gsum = self.g.sum()
        rp = rhs[self.p_pos]
        lam = rp.sum() / gsum
        b = rhs.copy()
        b[self.p_pos] = rp - lam * self.g
        if self._perm is None:
            pattern = A[self.keep][:, self.keep]
            self._perm = self.keep[reverse_cuthill_mckee(pattern.tocsr(), symmetric_mode=True)]
        perm = self._perm
        Ak = A[perm][:, perm].tocsc()
        bk = b[perm]
        y = None
        for thresh in (0.1, 1.0):
            try:
                lu = spla.splu(Ak, permc_spec="NATURAL", diag_pivot_thresh=thresh)
            except RuntimeError as exc:
                raise LinearSolveFailure(str(exc)) from exc
            y = lu.solve(bk)
            nb = np.linalg.norm(bk)
            if not np.all(np.isfinite(y)):
                continue
            if np.linalg.norm(Ak @ y - bk) <= self.linear_tol * max(nb, 1e-300):
                break
        else:
            if y is None or not np.all(np.isfinite(y)):
                raise LinearSolveFailure("direct solve produced non-finite values")
            raise LinearSolveFailure("direct solve missed the linear tolerance")
        d = np.zeros_like(rhs)
        d[perm] = y
        d[self.lam_pos] = lam
        c = (rhs[self.lam_pos] - self.g @ d[self.p_pos]) / gsum
        d[self.p_pos] += c
        return d


# ---------------------------------------------------------------------------
# nonlinear solve


def _boundary_zero(space, u0):
    if u0 is None:
        return np.zeros(space.n_dofs)
    if isinstance(u0, Solution):
        x = np.array(u0.x, dtype=float)
    else:
        u0 = np.asarray(u0, dtype=float)
        if u0.shape == (space.n_dofs,):
            x = u0.copy()
        elif u0.shape == (space.n_nodes, 2):
            x = space.join(u0)
        else:
            raise DimensionMismatch(f"initial guess has shape {u0.shape}")
    x[space.velocity_dofs(space.dirichlet_nodes)] = 0.0
    return x


def solve_truncated(mesh, carrier, cfg=None, body_force=None, u0=None, body_stress=None,
                    stage=0, space=None):
    """Solve the truncated problem on ``mesh`` with carrier ``carrier``.

    Returns a :class:`Solution` whose ``history`` holds one record per
    iteration.  Raises :class:`NonConvergence` (with the last iterate
    attached) when ``cfg.max_iter`` is reached.
    """
    cfg = SolverConfig() if cfg is None else cfg
    space = as_space(mesh) if space is None else space
    prob = FlowProblem(space, carrier, cfg.law, body_force=body_force,
                       convection=cfg.convection, body_stress=body_stress)
    free = space.free_dofs()
    lin = SaddlePointSolver(space, free, cfg.linear_tol)
    x = _boundary_zero(space, u0)

    history = []
    r = prob.residual(x)[free]
    rn = float(np.linalg.norm(r))
    r0 = rn
    mode = "picard"
    it = 0
    converged = False
    while True:
        done = it > 0 and (rn <= cfg.tol_abs or rn <= cfg.tol_rel * r0)
        if done:
            converged = True
            break
        if it >= cfg.max_iter:
            break
        if mode == "picard" and (rn <= cfg.switch_rel * r0 or it >= cfg.max_picard):
            mode = "newton"
        A = lin.reduce(prob.matrix(x, newton=(mode == "newton")))
        d = lin.solve(A, -r)
        theta = cfg.theta if mode == "picard" else 1.0
        step = np.zeros_like(x)
        step[free] = d
        accepted = False
        for _ in range(cfg.max_backtrack):
            x_try = x + theta * step
            r_try = prob.residual(x_try)[free]
            rn_try = float(np.linalg.norm(r_try))
            if rn_try < rn or rn == 0.0:
                accepted = True
                break
            theta *= 0.5
        if not accepted and mode == "picard":
            # a frozen-coefficient step that fails to decrease the residual
            # is retried as a Newton step
            mode = "newton"
            history.append({"stage": stage, "iterate": it, "residual": rn, "damping": 0.0,
                            "mode": "picard-rejected"})
            it += 1
            continue
        x, r, rn = x_try, r_try, rn_try
        it += 1
        history.append({"stage": stage, "iterate": it, "residual": rn, "damping": theta,
                        "mode": mode})
        logger.debug("stage %d iterate %d residual %.3e (%s, theta %.3g)",
                     stage, it, rn, mode, theta)
        if not accepted and rn_try >= rn and theta < 1e-3:
            # line search stalled; let max_iter decide
            pass
    sol = Solution(space, x, carrier, cfg.law, converged, it, history, body_force)
    if not converged:
        raise NonConvergence(f"no convergence after {it} iterations, residual {rn:.3e}",
                             solution=sol, history=history)
    return sol


class PowerLawFlowSolver(BaseEstimator):
    """Estimator-style front end to :func:`solve_truncated`.

    ``fit`` takes a mesh and a carrier instead of a design matrix; ``predict``
    evaluates the velocity ``v = u + a`` at query points.

    Examples
    --------
    >>> from shearflow.geometry import straight_channel, truncate, mesh
    >>> from shearflow.carrier import build_carrier_2d
    >>> dom = straight_channel()
    >>> m = mesh(truncate(dom, 1.0), 0.2)
    >>> est = PowerLawFlowSolver(p=3.0, T=1.0).fit(m, build_carrier_2d(dom, 0.0))
    >>> est.n_iter_
    1
    """

    def __init__(self, p=3.0, T=10.0, theta=None, tol_abs=1e-10, tol_rel=1e-9, max_iter=60,
                 switch_rel=1e-3, convection=True, linear_tol=1e-8):
        self.p = p
        self.T = T
        self.theta = theta
        self.tol_abs = tol_abs
        self.tol_rel = tol_rel
        self.max_iter = max_iter
        self.switch_rel = switch_rel
        self.convection = convection
        self.linear_tol = linear_tol

    def _config(self):
        return SolverConfig(law=PowerLaw(float(self.p), float(self.T)), theta=self.theta,
                            tol_abs=self.tol_abs, tol_rel=self.tol_rel,
                            max_iter=int(self.max_iter), switch_rel=self.switch_rel,
                            convection=bool(self.convection), linear_tol=self.linear_tol)

    def fit(self, mesh, carrier, body_force=None, u0=None, body_stress=None):
        sol = solve_truncated(mesh, carrier, self._config(), body_force=body_force, u0=u0,
                              body_stress=body_stress)
        self.solution_ = sol
        self.n_iter_ = sol.n_iter
        self.history_ = sol.history
        self.converged_ = sol.converged
        return self

    def predict(self, points):
        check_is_fitted(self, "solution_")
        pts = check_array(points, ensure_2d=True)
        if pts.shape[1] != 2:
            raise DimensionMismatch("points must have two columns")
        return self.solution_.velocity(pts)[0]


# ---------------------------------------------------------------------------
# transfer between nested meshes


def transfer_velocity(src, dst_space, tol=1e-9):
    """Carry a correction field onto another space, extending by zero.

    Nodes shared with the source mesh are copied exactly; other nodes inside
    the source mesh are interpolated; nodes outside get zero.
    """
    src_space = src.space if isinstance(src, Solution) else src[0]
    u = src.u if isinstance(src, Solution) else src[1]
    tree = cKDTree(src_space.node_coords)
    dist, idx = tree.query(dst_space.node_coords)
    out = np.zeros((dst_space.n_nodes, 2))
    hit = dist <= tol
    out[hit] = u[idx[hit]]
    rest = np.flatnonzero(~hit)
    if len(rest):
        pts = dst_space.node_coords[rest]
        owner, _ = src_space.mesh.locate(pts)
        inside = owner >= 0
        if inside.any():
            out[rest[inside]] = src_space.evaluate_velocity(u, pts[inside])[0]
    out[dst_space.dirichlet_nodes] = 0.0
    return out


def _window_mask(space, t):
    return np.abs(space.points[..., 0]) <= t


def seminorm_1p(space, u, p, t=None):
    """``(int |grad u|^p)^(1/p)`` over ``|x1| <= t`` (whole mesh if ``t`` is None)."""
    _, G = space.velocity_at_qp(u)
    g = np.sqrt(np.sum(G * G, axis=(-1, -2)))
    w = space.weights if t is None else space.weights * _window_mask(space, t)
    return float(np.sum(w * g ** p) ** (1.0 / p))


# ---------------------------------------------------------------------------
# continuation


@dataclass
class StageSummary:
    T: float
    n_dofs: int
    n_iter: int
    converged: bool
    final_residual: float
    initial_residual: float
    y2: float
    yp: float

    @property
    def y(self):
        return self.y2 + self.yp


@dataclass
class ContinuationReport:
    """Per-stage summaries and the Cauchy differences on the window."""

    t: float
    stages: list = field(default_factory=list)
    deltas: list = field(default_factory=list)
    solutions: list = field(default_factory=list)
    error: str = None

    @property
    def y_values(self):
        return [s.y for s in self.stages]

    def deltas_decreasing(self):
        d = self.deltas
        return all(b <= a for a, b in zip(d, d[1:]))

    def to_dict(self):
        return {"t": self.t, "deltas": list(self.deltas), "error": self.error,
                "stages": [{"T": s.T, "n_dofs": s.n_dofs, "n_iter": s.n_iter,
                            "converged": s.converged, "final_residual": s.final_residual,
                            "initial_residual": s.initial_residual, "y2": s.y2, "yp": s.yp}
                           for s in self.stages]}


def continuation_run(domain, alpha, cfg, t, h, carrier=None, keep_solutions=False,
                     on_stage=None):
    """Solve on ``Omega_{T_k}`` with floor ``1/T_k`` for each ``T_k`` in the schedule.

    Each stage starts from the previous solution extended by zero.  The
    report lists ``delta_k = |u^{k+1} - u^k|_{1,p,Omega_t}`` and the
    window energies ``y(t)`` per stage.  A failing stage ends the run with a
    partial report and the error message recorded.
    """
    from .carrier import build_carrier_2d
    from .diagnostics import dirichlet_energy
    from .geometry import mesh as make_mesh, truncate

    if not cfg.schedule:
        raise ValueError("continuation needs a nonempty schedule")
    if any(T < t + 1 for T in cfg.schedule):
        raise ValueError("every stage length must satisfy T_k >= t + 1")
    carrier = build_carrier_2d(domain, alpha) if carrier is None else carrier
    p = cfg.law.p
    report = ContinuationReport(t=float(t))
    prev = None
    for k, T in enumerate(cfg.schedule):
        stage_cfg = replace(cfg, law=PowerLaw(p, T))
        m = make_mesh(truncate(domain, T), h)
        space = TaylorHoodSpace(m)
        u0 = None if prev is None else transfer_velocity(prev, space)
        prob = FlowProblem(space, carrier, stage_cfg.law, convection=cfg.convection)
        x0 = _boundary_zero(space, u0)
        r_init = float(np.linalg.norm(prob.residual(x0)[space.free_dofs()]))
        try:
            sol = solve_truncated(m, carrier, stage_cfg, u0=u0, stage=k, space=space)
        except ShearflowError as exc:
            report.error = f"stage {k} (T={T}): {exc}"
            if isinstance(exc, NonConvergence) and exc.solution is not None and keep_solutions:
                report.solutions.append(exc.solution)
            break
        e2, ep = dirichlet_energy(sol, t)
        hist = sol.history
        report.stages.append(StageSummary(T, space.n_dofs, sol.n_iter, sol.converged,
                                          hist[-1]["residual"] if hist else r_init, r_init,
                                          e2 / T, ep))
        if prev is not None:
            diff = sol.u - transfer_velocity(prev, space)
            report.deltas.append(seminorm_1p(space, diff, p, t))
        if on_stage is not None:
            on_stage(k, sol)
        if keep_solutions:
            report.solutions.append(sol)
        prev = sol
    return report


# ---------------------------------------------------------------------------
# divergence equation


@dataclass
class BogovskiiResult:
    w: np.ndarray
    space: object
    q: float
    norm_w: float
    norm_f: float
    constraint_residual: float
    iterations: int

    @property
    def ratio(self):
        return 0.0 if self.norm_f == 0 else self.norm_w / self.norm_f


def _f_at_qp(space, f):
    if callable(f):
        return np.asarray(f(space.points.reshape(-1, 2)), dtype=float).reshape(space.weights.shape)
    f = np.asarray(f, dtype=float)
    if f.shape == (space.n_pressure,):
        return space.pressure_at_qp(f)
    if f.shape == space.weights.shape:
        return f
    raise DimensionMismatch(f"cannot interpret data of shape {f.shape}")


def w1q_norm(space, w, q):
    val, G = space.velocity_at_qp(w)
    a = np.sqrt(np.sum(val * val, axis=-1))
    g = np.sqrt(np.sum(G * G, axis=(-1, -2)))
    return float(np.sum(space.weights * (a ** q + g ** q)) ** (1.0 / q))


def bogovskii_solve(mesh, f, q=2.0, tol=1e-10, mean_tol=1e-10, max_irls=30, eps=1e-8,
                    space=None):
    """Velocity ``w`` vanishing on the boundary with ``div w = f`` weakly.

    For ``q = 2`` this is the minimizer of ``int |grad w|^2`` under the
    discrete divergence constraint, hence linear in ``f``.  Other ``q`` use
    iteratively reweighted least squares with weights
    ``(|grad w|^2 + eps^2)^((q-2)/2)``.

    ``f`` is a callable on points, P1 nodal values or quadrature values.
    """
    if not 1 < q < math.inf:
        raise ValueError(f"q must lie in (1, inf), got {q}")
    space = as_space(mesh) if space is None else space
    fq = _f_at_qp(space, f)
    W = space.weights
    mean = float(np.sum(W * fq))
    norm2 = float(np.sqrt(np.sum(W * fq * fq)))
    if abs(mean) > mean_tol * max(norm2, 1e-300) and abs(mean) > 1e-300:
        raise NonZeroMean(f"integral of f is {mean:.3e}")
    norm_fq = float(np.sum(W * np.abs(fq) ** q) ** (1.0 / q))
    if norm2 == 0:
        return BogovskiiResult(np.zeros((space.n_nodes, 2)), space, q, 0.0, 0.0, 0.0, 0)

    B = divergence_matrix(space)
    # weak divergence target: -int psi f, matching the sign of B
    rhs_p = -np.zeros(space.n_pressure)
    np.add.at(rhs_p, space.mesh.triangles, -np.einsum("eq,qk->ek", W * fq, space.M))
    free_v = np.setdiff1d(np.arange(space.n_velocity),
                          space.velocity_dofs(space.dirichlet_nodes))
    Bf = B[:, free_v]
    pin = 0
    keep_p = np.arange(1, space.n_pressure)

    def solve(weights_qp):
        K = _weighted_gradient_matrix(space, weights_qp)[free_v][:, free_v]
        S = sp.bmat([[K, Bf[keep_p].T], [Bf[keep_p], None]], format="csc")
        rhs = np.concatenate([np.zeros(len(free_v)), rhs_p[keep_p]])
        perm = reverse_cuthill_mckee(S.tocsr(), symmetric_mode=True)
        try:
            lu = spla.splu(S[perm][:, perm].tocsc(), permc_spec="NATURAL",
                           diag_pivot_thresh=1.0)
        except RuntimeError as exc:
            raise LinearSolveFailure(str(exc)) from exc
        y = np.empty_like(rhs)
        y[perm] = lu.solve(rhs[perm])
        w = np.zeros(space.n_velocity)
        w[free_v] = y[:len(free_v)]
        return np.column_stack([w[:space.n_nodes], w[space.n_nodes:]])

    del pin
    w = solve(np.ones_like(W))
    its = 1
    if q != 2:
        scale = max(np.sqrt(np.sum(W * np.sum(space.velocity_at_qp(w)[1] ** 2, axis=(-1, -2)))
                            / W.sum()), 1e-300)
        prev = w1q_norm(space, w, q)
        for _ in range(max_irls):
            _, G = space.velocity_at_qp(w)
            g2 = np.sum(G * G, axis=(-1, -2))
            wts = (g2 + (eps * scale) ** 2) ** ((q - 2) / 2)
            w = solve(wts)
            its += 1
            cur = w1q_norm(space, w, q)
            if abs(cur - prev) <= 1e-8 * cur:
                break
            prev = cur
    resid = float(np.linalg.norm(B @ np.concatenate([w[:, 0], w[:, 1]]) - rhs_p))
    return BogovskiiResult(w, space, q, w1q_norm(space, w, q), norm_fq, resid, its)


def _weighted_gradient_matrix(space, wq):
    W = space.weights * wq
    G0 = np.einsum("eq,eqaj,eqbj->eab", W, space.dN, space.dN)
    cn = space.cell_nodes
    rows = np.repeat(cn, 6, axis=1).ravel()
    cols = np.tile(cn, (1, 6)).ravel()
    n = space.n_nodes
    K1 = sp.csr_matrix((G0.ravel(), (rows, cols)), shape=(n, n))
    return sp.block_diag([K1, K1], format="csr")


# ---------------------------------------------------------------------------
# uniqueness


def random_initial_guess(space, rng, scale=1.0, modes=3):
    """Smooth random correction vanishing on the boundary of the mesh."""
    X = space.node_coords
    lo, hi = X.min(axis=0), X.max(axis=0)
    s = (X - lo) / (hi - lo)
    out = np.zeros((space.n_nodes, 2))
    for i in range(2):
        for _ in range(modes):
            kx, ky = rng.integers(1, 4, size=2)
            out[:, i] += rng.normal() * np.sin(np.pi * kx * s[:, 0]) * np.sin(np.pi * ky * s[:, 1])
    out *= scale
    out[space.dirichlet_nodes] = 0.0
    return out


@dataclass
class UniquenessReport:
    distances: np.ndarray
    tolerance: float
    coincide: bool
    n_iter: list
    errors: list

    def to_dict(self):
        return {"distances": self.distances.tolist(), "tolerance": self.tolerance,
                "coincide": self.coincide, "n_iter": self.n_iter, "errors": self.errors}


def probe_uniqueness(mesh, carrier, cfg, initial_guesses, tolerance=None):
    """Solve from each initial guess and compare the limits in ``|.|_{1,p}``.

    Runs coincide when every pairwise distance is at most ``tolerance``
    (default ten times the absolute residual tolerance).  The relative
    stopping test is disabled: distant guesses start with large residuals,
    and stopping relative to them leaves the limits far apart.
    """
    if len(initial_guesses) < 2:
        raise ValueError("need at least two initial guesses")
    space = as_space(mesh)
    tol = 10 * cfg.tol_abs if tolerance is None else tolerance
    cfg = replace(cfg, tol_rel=np.finfo(float).tiny)
    sols, errors, iters = [], [], []
    for g in initial_guesses:
        try:
            s = solve_truncated(space.mesh, carrier, cfg, u0=g, space=space)
            errors.append(None)
        except NonConvergence as exc:
            s = exc.solution
            errors.append(str(exc))
        sols.append(s)
        iters.append(s.n_iter)
    n = len(sols)
    dist = np.zeros((n, n))
    for a in range(n):
        for b in range(a + 1, n):
            dist[a, b] = dist[b, a] = seminorm_1p(space, sols[a].u - sols[b].u, cfg.law.p)
    return UniquenessReport(dist, tol, bool(dist.max() <= tol and all(e is None for e in errors)),
                            iters, errors)


# ---------------------------------------------------------------------------
# manufactured p-Poiseuille flow


def poiseuille_profile(p, width=1.0, c=1.0):
    """Exact solution ``V`` of ``-(|V'|^(p-2) V')' = c`` with ``V(+-width/2) = 0``.

    Returns callables ``V(x2)`` and ``V'(x2)``.
    """
    e = p / (p - 1)
    k = c ** (1.0 / (p - 1))
    half = width / 2

    def V(x2):
        return (p - 1) / p * k * (half ** e - np.abs(x2) ** e)

    def dV(x2):
        return -np.sign(x2) * k * np.abs(x2) ** (1.0 / (p - 1))

    return V, dV


def poiseuille_flux(p, width=1.0, c=1.0):
    """Closed-form flux of :func:`poiseuille_profile`."""
    e = p / (p - 1)
    half = width / 2
    k = c ** (1.0 / (p - 1))
    return (p - 1) / p * k * (2 * half ** (e + 1) - 2 * half ** (e + 1) / (e + 1))


def poiseuille_forcing(p, T, width=1.0):
    """Loads that make ``v = (V(x2), 0)`` solve the floored tensor law.

    With ``|D(v)| = |V'|/sqrt(2)`` the power part needs the constant body
    force ``2^(-p/2)``; the floor part ``(1/T) V'/2`` is returned as a
    symmetric stress, entering in divergence form because its divergence is
    singular on the centreline for ``p > 2``.
    """
    _, dV = poiseuille_profile(p, width)
    fl = 0.0 if math.isinf(T) else 1.0 / T
    c = 2.0 ** (-p / 2)

    def body_force(X):
        return np.column_stack([np.full(len(X), c), np.zeros(len(X))])

    def body_stress(X):
        s = 0.5 * fl * dV(X[:, 1])
        G = np.zeros((len(X), 2, 2))
        G[:, 0, 1] = s
        G[:, 1, 0] = s
        return G

    return body_force, body_stress


def lp_error(solution, exact, p, window):
    """``||v - exact||_p`` over ``|x1| <= window``; ``exact`` maps points to (n, 2)."""
    s = solution.space
    _, _, v, _ = solution.qp_fields
    ex = np.asarray(exact(s.points.reshape(-1, 2))).reshape(v.shape)
    err = np.sqrt(np.sum((v - ex) ** 2, axis=-1))
    w = s.weights * _window_mask(s, window)
    return float(np.sum(w * err ** p) ** (1.0 / p))
