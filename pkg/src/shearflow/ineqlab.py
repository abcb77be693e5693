"""Empirical constants for the monotonicity, Korn, Poincare and divergence inequalities.

Quadratic cases are solved exactly through generalized eigenproblems;
other exponents use a seeded search over smooth random fields followed by
a short random hill climb, so the reported values are empirical bounds.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq, minimize_scalar

from .errors import BadExponent, EmptyTracePart
from .fem.assembly import as_space, gradient_matrix, scalar_matrices, stokes_matrix, strain_rate


@dataclass
class InequalityReport:
    inequality: str
    exponents: dict
    constant: float
    resolution: dict
    note: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {"inequality": self.inequality, "exponents": self.exponents,
                "constant": self.constant, "resolution": self.resolution, "note": self.note,
                "extra": self.extra}


# ---------------------------------------------------------------------------
# monotonicity


def sample_symmetric_tensors(rng, n, r_min=1e-3, r_max=1e3):
    """Symmetric 2x2 tensors as isometric vectors ``(a, sqrt(2) b, c)``.

    Directions are uniform on the sphere, radii log-uniform.
    """
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = np.exp(rng.uniform(np.log(r_min), np.log(r_max), size=n))
    return d * r[:, None]


def monotonicity_pairs(x, y, p):
    """Ratios ``<|x|^(p-2)x - |y|^(p-2)y, x-y> / |x-y|^p`` and the intermediate
    ratio against ``|x-y|^2 (|x|^(p-2) + |y|^(p-2))``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    nx = np.sqrt(np.sum(x * x, axis=1))
    ny = np.sqrt(np.sum(y * y, axis=1))
    wx = np.power(nx, p - 2)
    wy = np.power(ny, p - 2)
    d = x - y
    dd = np.sum(d * d, axis=1)
    lhs = np.sum((wx[:, None] * x - wy[:, None] * y) * d, axis=1)
    return lhs / np.power(dd, p / 2), lhs / (dd * (wx + wy))


def monotonicity_ratio(p, n_samples=100_000, seed=0, r_min=1e-3, r_max=1e3):
    """Sampled minimum of the monotonicity ratio over symmetric-tensor pairs."""
    if not p >= 2:
        raise BadExponent(f"p must be >= 2, got {p}")
    rng = np.random.default_rng(seed)
    x = sample_symmetric_tensors(rng, n_samples, r_min, r_max)
    y = sample_symmetric_tensors(rng, n_samples, r_min, r_max)
    ratio, inter = monotonicity_pairs(x, y, p)
    k = int(np.argmin(ratio))
    return InequalityReport(
        "monotonicity", {"p": p}, float(ratio[k]), {"samples": n_samples},
        note=f"minimum over {n_samples} sampled pairs, seed {seed}",
        extra={"intermediate_min": float(np.min(inter)), "sharp_floor": 2.0 ** (2 - p),
               "all_ones": bool(np.all(ratio == 1.0)),
               "argmin": [x[k].tolist(), y[k].tolist()]})


# ---------------------------------------------------------------------------
# helpers for discrete fields


def _free_velocity(space):
    bnd = space.velocity_dofs(space.dirichlet_nodes)
    return np.setdiff1d(np.arange(space.n_velocity), bnd)


def _vector_from(space, u):
    return np.concatenate([u[:, 0], u[:, 1]])


def _qp_grad(space, vec):
    u = np.column_stack([vec[:space.n_nodes], vec[space.n_nodes:]])
    return space.velocity_at_qp(u)


def _lq(space, vals, q):
    return float(np.sum(space.weights * vals ** q) ** (1.0 / q))


def _smooth_modes(space, rng, n_modes=4, components=2, zero_boundary=True):
    """Random low-frequency trigonometric field at the P2 nodes."""
    X = space.node_coords
    lo, hi = X.min(axis=0), X.max(axis=0)
    s = (X - lo) / np.where(hi > lo, hi - lo, 1.0)
    out = np.zeros((space.n_nodes, components))
    for c in range(components):
        for _ in range(n_modes):
            kx, ky = rng.integers(1, 4, size=2)
            ph = rng.uniform(0, 2 * np.pi, size=2)
            out[:, c] += rng.normal() * np.sin(np.pi * kx * s[:, 0] + ph[0]) \
                * np.sin(np.pi * ky * s[:, 1] + ph[1])
    if zero_boundary:
        out[space.dirichlet_nodes] = 0.0
    return out


def _hill_climb(objective, x0, rng, steps=20, scale=0.3):
    """Greedy random ascent; the step shrinks after each rejection."""
    best = x0.copy()
    fbest = objective(best)
    for _ in range(steps):
        cand = best + scale * np.linalg.norm(best) / np.sqrt(best.size) * rng.normal(size=best.shape)
        f = objective(cand)
        if f > fbest:
            best, fbest = cand, f
        else:
            scale *= 0.7
    return best, fbest


# ---------------------------------------------------------------------------
# Korn


def korn_constant(mesh, q=2.0, trials=40, seed=0, ascent_steps=20):
    """Smallest ``C`` with ``|v|_{1,q} <= C ||D(v)||_q`` over zero-trace P2 fields.

    ``q = 2`` is the square root of the top generalized eigenvalue of the
    gradient and strain stiffness matrices.  Other ``q`` maximize the ratio
    over ``trials`` random smooth fields, each refined by a hill climb.
    """
    space = as_space(mesh)
    free = _free_velocity(space)
    if q == 2:
        KG = gradient_matrix(space)[free][:, free].tocsc()
        KD = stokes_matrix(space)[free][:, free].tocsc()
        lam = spla.eigsh(KG, k=1, M=KD, which="LA", return_eigenvectors=False, tol=1e-12)[0]
        return InequalityReport("korn", {"q": 2.0}, float(np.sqrt(lam)),
                                {"h": mesh.h, "n_free": int(len(free))},
                                note="generalized eigenvalue, exact for the discrete space")
    rng = np.random.default_rng(seed)

    def ratio(vec):
        full = np.zeros(space.n_velocity)
        full[free] = vec
        _, G = _qp_grad(space, full)
        D = strain_rate(G)
        num = _lq(space, np.sqrt(np.sum(G * G, axis=(-1, -2))), q)
        den = _lq(space, np.sqrt(np.sum(D * D, axis=(-1, -2))), q)
        return num / den if den > 0 else 0.0

    best = 0.0
    for _ in range(trials):
        x0 = _vector_from(space, _smooth_modes(space, rng))[free]
        _, f = _hill_climb(ratio, x0, rng, ascent_steps)
        best = max(best, f)
    return InequalityReport("korn", {"q": float(q)}, float(best),
                            {"h": mesh.h, "n_free": int(len(free)), "trials": trials},
                            note=f"max over {trials} random fields with {ascent_steps}-step ascent, "
                                 f"seed {seed}")


# ---------------------------------------------------------------------------
# Poincare


def boundary_part(mesh, selector):
    """Boundary edges selected by ``selector(midpoints) -> bool array``."""
    e = mesh.boundary_edges
    mids = mesh.vertices[e].mean(axis=1)
    return e[np.asarray(selector(mids), dtype=bool)]


def _trace_functional(space, edges):
    """``int_Gamma N_j ds`` for every P2 node."""
    ell = np.zeros(space.n_nodes)
    if len(edges) == 0:
        return ell
    L = np.linalg.norm(space.mesh.vertices[edges[:, 0]] - space.mesh.vertices[edges[:, 1]], axis=1)
    mids = space.mesh.n_vertices + space._edge_index(edges)
    np.add.at(ell, edges[:, 0], L / 6)
    np.add.at(ell, edges[:, 1], L / 6)
    np.add.at(ell, mids, 2 * L / 3)
    return ell


def poincare_from_spectrum(lams, ells):
    """``1 / min (sqrt(c' Lam c) + |ell' c|)`` over unit vectors ``c``.

    ``lams`` are eigenvalues of the stiffness relative to the mass and
    ``ells`` the trace functional on the matching mass-orthonormal
    eigenvectors.
    """
    lams = np.asarray(lams, dtype=float)
    ells = np.asarray(ells, dtype=float)
    nl = np.linalg.norm(ells)
    if nl == 0:
        raise EmptyTracePart("trace functional vanishes on the spectrum")
    if len(lams) == 1:
        return 1.0 / (np.sqrt(max(lams[0], 0.0)) + nl)
    e = ells / nl
    # orthonormal basis of the complement of ell
    Q, _ = np.linalg.qr(np.column_stack([e, np.eye(len(e))[:, :len(e) - 1]]))
    P = Q[:, 1:]
    A = P.T @ (lams[:, None] * P)
    A = 0.5 * (A + A.T)
    mu, V = np.linalg.eigh(A)

    def g2(s):
        c0 = s * e / nl
        r2 = 1.0 - (s / nl) ** 2
        base = c0 @ (lams * c0)
        if r2 <= 0:
            return base
        r = np.sqrt(r2)
        b = V.T @ (P.T @ (lams * c0))

        def norm_w(sig):
            return np.sqrt(np.sum((b / (mu - sig)) ** 2))

        lo = mu[0] - 1.0
        while norm_w(lo) > r:
            lo = mu[0] - 2 * (mu[0] - lo)
        hi = mu[0] - 1e-14 * max(1.0, abs(mu[0]))
        if norm_w(hi) < r:
            # hard case: fill with the lowest eigenvector
            w = -b / (mu - mu[0] + (mu == mu[0]))
            w[0] = 0.0
            extra = np.sqrt(max(r2 - np.sum(w * w), 0.0))
            w[0] = extra
        else:
            sig = brentq(lambda s_: norm_w(s_) - r, lo, hi, xtol=1e-14, rtol=1e-14)
            w = -b / (mu - sig)
        wv = P @ (V @ w)
        c = c0 + wv
        return float(c @ (lams * c))

    def F(s):
        return np.sqrt(max(g2(s), 0.0)) + s

    grid = np.linspace(0.0, nl, 201)
    vals = np.array([F(s) for s in grid])
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    best = vals[k]
    if hi > lo:
        res = minimize_scalar(F, bounds=(lo, hi), method="bounded",
                              options={"xatol": 1e-12 * max(nl, 1.0)})
        best = min(best, float(res.fun))
    return 1.0 / best


def poincare_constant(mesh, gamma, q=2.0, n_modes=60, trials=40, seed=0, ascent_steps=20):
    """Smallest ``C`` with ``||v||_q <= C (|v|_{1,q} + ||v||_{1,Gamma})`` for scalar P2 ``v``.

    ``gamma`` selects boundary edges by their midpoints.  For ``q = 2`` the
    value follows from the lowest ``n_modes`` generalized eigenpairs; the
    constraint is exact there because ``|v|`` is admissible whenever ``v``
    is, so one-signed fields suffice and the trace term becomes linear.
    """
    space = as_space(mesh)
    edges = boundary_part(space.mesh, gamma)
    ell = _trace_functional(space, edges)
    gamma_len = float(ell.sum())
    if gamma_len <= 0:
        raise EmptyTracePart("selected boundary part has zero length")
    K, M = scalar_matrices(space)
    if q == 2:
        n = space.n_nodes
        k = min(n_modes, n - 2)
        if n <= 2500:
            lam, phi = sla.eigh(K.toarray(), M.toarray(), subset_by_index=[0, k - 1])
        else:
            lam, phi = spla.eigsh(K.tocsc(), k=k, M=M.tocsc(), sigma=-1e-2, which="LM")
            order = np.argsort(lam)
            lam, phi = lam[order], phi[:, order]
        # the constant mode is an exact null vector; roundoff would survive the square root
        lam = np.where(lam < 1e-10 * lam.max(), 0.0, lam)
        C = poincare_from_spectrum(lam, phi.T @ ell)
        return InequalityReport("poincare", {"q": 2.0}, float(C),
                                {"h": mesh.h, "n_modes": int(k)},
                                note="secular equation on the lowest generalized eigenpairs",
                                extra={"gamma_length": gamma_len})
    rng = np.random.default_rng(seed)

    def ratio(vec):
        vals, grads = space.scalar_p2_at_qp(vec)
        num = _lq(space, np.abs(vals), q)
        den = _lq(space, np.sqrt(np.sum(grads * grads, axis=-1)), q) + float(ell @ np.abs(vec))
        return num / den if den > 0 else 0.0

    best = ratio(np.ones(space.n_nodes))
    for _ in range(trials):
        x0 = 1.0 + 0.5 * _smooth_modes(space, rng, components=1, zero_boundary=False)[:, 0]
        _, f = _hill_climb(ratio, x0, rng, ascent_steps)
        best = max(best, f)
    return InequalityReport("poincare", {"q": float(q)}, float(best),
                            {"h": mesh.h, "trials": trials},
                            note=f"max over {trials} random fields with {ascent_steps}-step ascent",
                            extra={"gamma_length": gamma_len})


# ---------------------------------------------------------------------------
# divergence equation


def random_zero_mean(space, rng, n_modes=4):
    """Smooth random scalar at quadrature points with zero integral."""
    X = space.points.reshape(-1, 2)
    lo, hi = space.mesh.vertices.min(axis=0), space.mesh.vertices.max(axis=0)
    s = (X - lo) / np.where(hi > lo, hi - lo, 1.0)
    f = np.zeros(len(X))
    for _ in range(n_modes):
        kx, ky = rng.integers(0, 4, size=2)
        ph = rng.uniform(0, 2 * np.pi, size=2)
        f += rng.normal() * np.cos(np.pi * kx * s[:, 0] + ph[0]) * np.cos(np.pi * ky * s[:, 1] + ph[1])
    f = f.reshape(space.weights.shape)
    return f - np.sum(space.weights * f) / space.weights.sum()


def checkerboard(space, n=2):
    """Zero-mean sign pattern on an ``n x n`` partition of the bounding box."""
    X = space.points
    lo, hi = space.mesh.vertices.min(axis=0), space.mesh.vertices.max(axis=0)
    s = (X - lo) / (hi - lo)
    i = np.minimum((s[..., 0] * n).astype(int), n - 1)
    j = np.minimum((s[..., 1] * n).astype(int), n - 1)
    f = np.where((i + j) % 2 == 0, 1.0, -1.0)
    return f - np.sum(space.weights * f) / space.weights.sum()


def bogovskii_constant(mesh, q=2.0, trials=20, seed=0):
    """Largest ``||w(f)||_{1,q} / ||f||_q`` over random smooth zero-mean ``f``."""
    from .solver import bogovskii_solve
    if trials < 20:
        raise ValueError("need at least 20 trials")
    space = as_space(mesh)
    rng = np.random.default_rng(seed)
    ratios = []
    for _ in range(trials):
        f = random_zero_mean(space, rng)
        res = bogovskii_solve(space.mesh, f, q, space=space)
        if res.norm_f > 0:
            ratios.append(res.ratio)
    ratios = np.array(ratios)
    return InequalityReport("bogovskii", {"q": float(q)}, float(ratios.max()),
                            {"h": mesh.h, "trials": trials},
                            note=f"max over {trials} random zero-mean data, seed {seed}",
                            extra={"median": float(np.median(ratios))})
