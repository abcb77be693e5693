"""Energy-growth quantities, the comparison-lemma verifier and exponent bookkeeping.

All window quantities assign quadrature points to a region by membership,
so elements straddling a cut contribute only the part of their quadrature
that lies inside.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.optimize import brentq

from .errors import (BadExponent, GridMismatch, HypothesisViolated, NotStrictlyIncreasingPsi,
                     RegionMismatch, SliceOutsideMesh, TooFewSamples, WindowExceedsDomain)


def _mesh_halflength(space):
    region = space.mesh.region
    if region is not None and hasattr(region, "t"):
        return float(region.t)
    return float(np.max(np.abs(space.mesh.vertices[:, 0])))


# ---------------------------------------------------------------------------
# window energies


def _cumulative(space, density):
    """Sorted ``|x1|`` of quadrature points and the running integral."""
    a = np.abs(space.points[..., 0]).ravel()
    d = (space.weights * density).ravel()
    order = np.argsort(a, kind="stable")
    return a[order], np.concatenate([[0.0], np.cumsum(d[order])])


def _window_integral(space, density, ts):
    a, c = _cumulative(space, density)
    idx = np.searchsorted(a, np.asarray(ts, dtype=float), side="right")
    return c[idx]


def _grad_norm_u(solution):
    _, Gu, _, _ = solution.qp_fields
    return np.sqrt(np.sum(Gu * Gu, axis=(-1, -2)))


def _grad_norm_v(solution):
    _, _, _, Gv = solution.qp_fields
    return np.sqrt(np.sum(Gv * Gv, axis=(-1, -2)))


def _check_window(solution, ts):
    T = _mesh_halflength(solution.space)
    if np.max(ts) > T * (1 + 1e-12):
        raise WindowExceedsDomain(f"window {np.max(ts)} exceeds truncation {T}")


def dirichlet_energy(solution, t):
    """``(|u|^2_{1,2,Omega_t}, |u|^p_{1,p,Omega_t})`` for the correction ``u``."""
    _check_window(solution, [t])
    g = _grad_norm_u(solution)
    p = solution.law.p
    e2 = float(_window_integral(solution.space, g ** 2, [t])[0])
    ep = float(_window_integral(solution.space, g ** p, [t])[0])
    return e2, ep


def y_series(solution, ts):
    """``(1/T)|u|^2_{1,2,Omega_t}`` and ``|u|^p_{1,p,Omega_t}`` on a grid of ``t``."""
    ts = np.asarray(ts, dtype=float)
    _check_window(solution, ts)
    g = _grad_norm_u(solution)
    T = solution.law.T
    fl = 0.0 if math.isinf(T) else 1.0 / T
    y2 = fl * _window_integral(solution.space, g ** 2, ts)
    yp = _window_integral(solution.space, g ** solution.law.p, ts)
    return y2, yp


def z_series(ts, y, etas=None):
    """Window average ``z(eta) = int_{eta-1}^{eta} y`` and ``z'(eta) = y(eta) - y(eta-1)``.

    ``ts`` must be uniform with a spacing that divides 1.  ``etas`` defaults
    to every grid point with ``eta - 1`` on the grid.
    """
    ts = np.asarray(ts, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(ts) != len(y) or len(ts) < 2:
        raise GridMismatch("need matching t and y arrays with at least two samples")
    dt = ts[1] - ts[0]
    if not np.allclose(np.diff(ts), dt, rtol=1e-9, atol=1e-12) or dt <= 0:
        raise GridMismatch("t grid is not uniform")
    m = 1.0 / dt
    k = int(round(m))
    if abs(m - k) > 1e-9 * m:
        raise GridMismatch(f"grid spacing {dt} does not divide 1")
    if etas is None:
        idx = np.arange(k, len(ts))
    else:
        etas = np.atleast_1d(np.asarray(etas, dtype=float))
        idx = np.rint((etas - ts[0]) / dt).astype(int)
        if np.any(np.abs(ts[0] + idx * dt - etas) > 1e-9) or np.any(idx < k) \
                or np.any(idx >= len(ts)):
            raise GridMismatch("eta values must lie on the grid with eta - 1 on the grid")
    csum = np.concatenate([[0.0], np.cumsum(0.5 * dt * (y[1:] + y[:-1]))])
    z = csum[idx] - csum[idx - k]
    zp = y[idx] - y[idx - k]
    return ts[idx], z, zp


def slice_dissipation(solution, i, t):
    """``int |grad v|^p`` over the unit slice of outlet ``i`` ending at ``t``.

    Membership is half-open (``t-1 < (-1)^i x1 <= t``) so consecutive slices
    tile the outlet exactly.
    """
    return float(slice_series(solution, i, [t])[0])


def slice_series(solution, i, ts):
    ts = np.asarray(ts, dtype=float)
    if i not in (1, 2):
        raise ValueError("outlet index must be 1 or 2")
    if np.any(ts < 1):
        raise SliceOutsideMesh("slices need t >= 1")
    T = _mesh_halflength(solution.space)
    if np.max(ts) > T * (1 + 1e-12):
        raise SliceOutsideMesh(f"slice end {np.max(ts)} beyond truncation {T}")
    s = solution.space
    g = _grad_norm_v(solution) ** solution.law.p
    x1 = s.points[..., 0]
    sx = x1 if i == 2 else -x1
    d = (s.weights * g).ravel()
    sx = sx.ravel()
    pos = sx > 0
    order = np.argsort(sx[pos], kind="stable")
    a = sx[pos][order]
    c = np.concatenate([[0.0], np.cumsum(d[pos][order])])
    hi = c[np.searchsorted(a, ts, side="right")]
    lo = c[np.searchsorted(a, ts - 1, side="right")]
    return hi - lo


# ---------------------------------------------------------------------------
# series and fits


@dataclass
class GrowthReport:
    sup_ratio: float
    argsup: float
    c1: float
    c2: float
    fit_residual: float
    superlinear: bool

    def to_dict(self):
        return {"sup_ratio": self.sup_ratio, "argsup": self.argsup, "c1": self.c1,
                "c2": self.c2, "fit_residual": self.fit_residual,
                "superlinear": self.superlinear}


def growth_rate(ts, y, superlinear_tol=0.05):
    """Supremum of ``y(t)/t`` and the least-squares line ``y ~ c1 t + c2``.

    ``fit_residual`` is ``||y - fit||_2 / ||y||_2``.  The superlinear flag is
    raised when a quadratic term explains more than ``superlinear_tol`` of
    the spread of ``y``.
    """
    ts = np.asarray(ts, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(ts) < 3:
        raise TooFewSamples("growth fit needs at least three samples")
    pos = ts > 0
    ratio = y[pos] / ts[pos]
    k = int(np.argmax(ratio))
    A = np.column_stack([ts, np.ones_like(ts)])
    (c1, c2), *_ = np.linalg.lstsq(A, y, rcond=None)
    ny = np.linalg.norm(y)
    res = float(np.linalg.norm(y - A @ [c1, c2]) / ny) if ny > 0 else 0.0
    quad = np.polyfit(ts, y, 2)[0]
    spread = float(np.ptp(y))
    span = float(np.ptp(ts))
    superlinear = bool(quad > 0 and spread > 0 and quad * span ** 2 > superlinear_tol * spread)
    return GrowthReport(float(ratio[k]), float(ts[pos][k]), float(c1), float(c2), res,
                        superlinear)


@dataclass
class DiagnosticsSeries:
    """Window energies, their averages and slice dissipations on one grid."""

    t: np.ndarray
    y2: np.ndarray
    yp: np.ndarray
    z: np.ndarray
    zprime: np.ndarray
    slice1: np.ndarray
    slice2: np.ndarray
    c1: float = 0.0
    c2: float = 0.0
    kappa: float = 0.0
    fit_residual: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def y(self):
        return self.y2 + self.yp

    def columns(self):
        return {"t": self.t, "y2": self.y2, "yp": self.yp, "z": self.z, "zprime": self.zprime,
                "slice1": self.slice1, "slice2": self.slice2}

    def sandwich_holds(self, tol=1e-12):
        """``y(eta-1) <= z(eta) <= y(eta)`` on the whole grid."""
        y = self.y
        grid_t = self.meta["y_grid_t"]
        grid_y = self.meta["y_grid"]
        lo = grid_y[np.searchsorted(grid_t, self.t - 1.0 - 1e-9)]
        scale = tol * (1 + np.abs(y))
        return bool(np.all(lo <= self.z + scale) and np.all(self.z <= y + scale))


def diagnostics_series(solution, dt=0.125, fit_window=None, t_max=None):
    """Sample ``y``, ``z``, ``z'`` and both slice dissipations on ``[1, T]``.

    Constants ``c1, c2`` come from a least-squares fit of ``y`` over
    ``fit_window`` (default ``[2, T-2]``), and ``kappa`` is the largest
    unit-slice dissipation with slice end in that window.
    """
    T = _mesh_halflength(solution.space) if t_max is None else float(t_max)
    n = int(round(T / dt))
    if abs(n * dt - T) > 1e-9:
        raise GridMismatch(f"spacing {dt} does not divide the truncation length {T}")
    grid = np.linspace(0.0, T, n + 1)
    y2, yp = y_series(solution, grid)
    y = y2 + yp
    te, z, zp = z_series(grid, y)
    sel = np.searchsorted(grid, te - 1e-12)
    s1 = slice_series(solution, 1, te)
    s2 = slice_series(solution, 2, te)
    lo, hi = (2.0, T - 2.0) if fit_window is None else fit_window
    win = (te >= lo - 1e-12) & (te <= hi + 1e-12)
    c1 = c2 = res = 0.0
    kappa = 0.0
    if win.sum() >= 3:
        g = growth_rate(te[win], y[sel][win])
        c1, c2, res = g.c1, g.c2, g.fit_residual
    if win.any():
        kappa = float(max(s1[win].max(), s2[win].max()))
    return DiagnosticsSeries(te, y2[sel], yp[sel], z, zp, s1, s2, c1, c2, kappa, res,
                             meta={"y_grid_t": grid, "y_grid": y, "T": T, "dt": dt})


def kappa_exponent(alphas, kappas):
    """Least-squares exponent ``gamma`` in ``kappa ~ C |alpha|^gamma``."""
    a = np.abs(np.asarray(alphas, dtype=float))
    k = np.asarray(kappas, dtype=float)
    ok = (a > 0) & (k > 0)
    if ok.sum() < 2:
        return float("nan"), float("nan")
    gamma, logc = np.polyfit(np.log(a[ok]), np.log(k[ok]), 1)
    return float(gamma), float(np.exp(logc))


# ---------------------------------------------------------------------------
# comparison lemma


@dataclass(frozen=True)
class PsiSpec:
    """``Psi(tau) = sum_k c_k sign(tau) |tau|^(e_k)``."""

    coefficients: tuple
    exponents: tuple

    def __post_init__(self):
        c = tuple(float(x) for x in self.coefficients)
        e = tuple(float(x) for x in self.exponents)
        if len(c) != len(e) or not c:
            raise NotStrictlyIncreasingPsi("coefficients and exponents must pair up")
        object.__setattr__(self, "coefficients", c)
        object.__setattr__(self, "exponents", e)
        if any(ek <= 0 for ek in e) or any(ck < 0 for ck in c) or not any(ck > 0 for ck in c):
            raise NotStrictlyIncreasingPsi(
                "Psi needs positive exponents and nonnegative, not all zero, coefficients")

    @classmethod
    def energy_bound(cls, c2, p):
        """``c2 (tau + tau^(1/2) + tau^(1/p) + tau^(2/p) + tau^(3/p))``."""
        return cls((c2,) * 5, (1.0, 0.5, 1.0 / p, 2.0 / p, 3.0 / p))

    @classmethod
    def power(cls, m, c=1.0):
        return cls((c,), (m,))

    def __call__(self, tau):
        tau = np.asarray(tau, dtype=float)
        s, a = np.sign(tau), np.abs(tau)
        return s * sum(c * a ** e for c, e in zip(self.coefficients, self.exponents))

    def inverse(self, y):
        y = float(y)
        if y == 0:
            return 0.0
        hi = 1.0
        while abs(self(hi * np.sign(y))) < abs(y):
            hi *= 2
        return brentq(lambda s: float(self(s)) - y, -hi, hi, xtol=1e-15, rtol=1e-15)


@dataclass
class ComparisonVerdict:
    holds: bool
    hypotheses_hold: bool
    conclusion_holds: bool
    first_violation: str = None
    where: float = None
    margins: dict = field(default_factory=dict)

    def to_dict(self):
        return {"holds": self.holds, "hypotheses_hold": self.hypotheses_hold,
                "conclusion_holds": self.conclusion_holds,
                "first_violation": self.first_violation, "where": self.where,
                "margins": self.margins}


def _derivative(t, f):
    return np.gradient(f, t, edge_order=2)


def comparison_check(t, z, psi, delta, phi, phi_prime=None, zprime=None, t0=None, T=None,
                     rtol=1e-10):
    """Check the comparison-lemma hypotheses and conclusion on samples.

    Hypotheses, checked in order on ``[t0, T]``:

    * ``z <= Psi(z') + (1 - delta) phi``,
    * ``phi >= Psi(phi') / delta``,
    * ``z(T) <= phi(T)``;

    conclusion ``z <= phi``.  ``phi`` and ``phi_prime`` may be arrays or
    callables; missing derivatives are taken by second-order differences.
    """
    if not isinstance(psi, PsiSpec):
        raise NotStrictlyIncreasingPsi("psi must be a PsiSpec")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    phiv = np.asarray(phi(t) if callable(phi) else phi, dtype=float)
    if phi_prime is None:
        phip = _derivative(t, phiv)
    else:
        phip = np.asarray(phi_prime(t) if callable(phi_prime) else phi_prime, dtype=float)
    zp = _derivative(t, z) if zprime is None else np.asarray(
        zprime(t) if callable(zprime) else zprime, dtype=float)
    t0 = t[0] if t0 is None else t0
    T = t[-1] if T is None else T
    sel = (t >= t0 - 1e-12) & (t <= T + 1e-12)
    ts, zs, zps, ph, php = t[sel], z[sel], zp[sel], phiv[sel], phip[sel]

    def slack(*arrs):
        return rtol * (1.0 + sum(np.abs(a) for a in arrs))

    checks = [
        ("z <= Psi(z') + (1-delta) phi",
         psi(zps) + (1 - delta) * ph - zs, slack(zs, psi(zps), ph)),
        ("phi >= Psi(phi')/delta", ph - psi(php) / delta, slack(ph, psi(php) / delta)),
        ("z(T) <= phi(T)", np.array([ph[-1] - zs[-1]]), slack(np.array([ph[-1]]),
                                                              np.array([zs[-1]]))),
    ]
    margins = {}
    first = None
    where = None
    for name, margin, tol in checks:
        margins[name] = float(np.min(margin))
        bad = margin < -tol
        if first is None and np.any(bad):
            first = name
            where = float(ts[-1] if len(margin) == 1 else ts[np.argmax(bad)])
    concl = ph - zs
    margins["z <= phi"] = float(np.min(concl))
    concl_ok = bool(np.all(concl >= -slack(ph, zs)))
    hyp_ok = first is None
    if hyp_ok and not concl_ok:
        first = "conclusion z <= phi"
        where = float(ts[np.argmax(concl < -slack(ph, zs))])
    return ComparisonVerdict(hyp_ok and concl_ok, hyp_ok, concl_ok, first, where, margins)


def fit_comparison_constants(eta, z, zprime, p, c2=1.0):
    """Constants for the linear majorant ``phi = 2 c1 eta + c3`` with ``delta = 1/2``.

    ``c1`` is the smallest value with ``z <= c1 eta + Psi(z')`` on the
    samples and ``z(T) <= c1 T``; ``c3`` then satisfies
    ``2 c1 + c3 >= 2 Psi(2 c1)``.
    """
    psi = PsiSpec.energy_bound(c2, p)
    eta = np.asarray(eta, dtype=float)
    z = np.asarray(z, dtype=float)
    zp = np.asarray(zprime, dtype=float)
    c1 = max(float(np.max((z - psi(zp)) / eta)), float(z[-1] / eta[-1]), 0.0)
    c1 = c1 * (1 + 1e-9) + 1e-300
    c3 = max(2 * float(psi(2 * c1)) - 2 * c1, 0.0) * (1 + 1e-9) + 1e-12
    return {"psi": psi, "delta": 0.5, "c1": c1, "c3": c3,
            "phi": lambda s: 2 * c1 * np.asarray(s, dtype=float) + c3,
            "phi_prime": lambda s: np.full_like(np.asarray(s, dtype=float), 2 * c1)}


def blowup_rate(t, z, kind="power", m=None, c=None, tail=0.5, psi=None, zprime=None,
                rtol=1e-10):
    """Tail minimum of ``t^(-m/(m-1)) z`` (power bound) or ``exp(-t/c) z`` (linear).

    ``tail`` is the fraction of samples (from the end) used.  When ``psi``
    is given, ``z <= Psi(z')`` is checked first.
    """
    t = np.asarray(t, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(np.diff(z) < -rtol * (1 + np.abs(z[1:]))):
        raise HypothesisViolated("z is not nondecreasing")
    if not np.any(z != 0):
        raise HypothesisViolated("z vanishes identically")
    if psi is not None:
        zp = _derivative(t, z) if zprime is None else np.asarray(zprime, dtype=float)
        if np.any(z > psi(zp) + rtol * (1 + np.abs(z))):
            raise HypothesisViolated("z <= Psi(z') fails on the samples")
    n0 = min(len(t) - 1, int(np.floor((1 - tail) * len(t))))
    tt, zz = t[n0:], z[n0:]
    if kind == "power":
        if m is None or m <= 1:
            raise ValueError("power bound needs m > 1")
        vals = tt ** (-m / (m - 1)) * zz
    elif kind == "linear":
        if c is None or c <= 0:
            raise ValueError("linear bound needs c > 0")
        vals = np.exp(-tt / c) * zz
    else:
        raise ValueError(f"unknown bound kind {kind!r}")
    return float(np.min(vals))


# ---------------------------------------------------------------------------
# pointwise shear bound and weighted dissipation


@dataclass
class ShearBoundReport:
    c_max: float
    c: float
    holds: bool
    violation_measure: float
    component: tuple

    def to_dict(self):
        return {"c_max": self.c_max, "c": self.c, "holds": self.holds,
                "violation_measure": self.violation_measure, "component": list(self.component)}


def shear_bound_check(solution, c=None, p=None, component=(0, 1), window=None, min_r=1e-12):
    """Pointwise bound ``|d v_i / d x_j| >= c |x'|^(1/(p-1))`` at quadrature points.

    ``component = (i, j)`` picks the derivative; the default is the
    cross-stream shear ``d v1 / d x2``.  ``x'`` is the cross-stream
    coordinate ``x2``.  Reports the largest admissible ``c`` and the measure
    of the set where the bound fails for the given ``c``.
    """
    s = solution.space
    p = solution.law.p if p is None else p
    _, _, _, Gv = solution.qp_fields
    i, j = component
    g = np.abs(Gv[..., i, j])
    r = np.abs(s.points[..., 1])
    mask = np.ones_like(r, dtype=bool)
    if window is not None:
        lo, hi = window
        ax = np.abs(s.points[..., 0])
        mask &= (ax >= lo) & (ax <= hi)
    rad = r ** (1.0 / (p - 1))
    ok = mask & (r > min_r)
    c_max = float(np.min(g[ok] / rad[ok])) if ok.any() else 0.0
    c_used = c_max if c is None else float(c)
    fail = mask & (g < c_used * rad * (1 - 1e-12))
    meas = float(np.sum(s.weights[fail]))
    return ShearBoundReport(c_max, c_used, meas == 0.0, meas, (i, j))


def weighted_dissipation(v, w, p=None, window=None):
    """``|| |D(v)|^((p-2)/2) D(w) ||_2^2`` over ``|x1| <= window``.

    ``v`` is a Solution; ``w`` a Solution on the same space or P2 nodal
    values of shape ``(n_nodes, 2)``.
    """
    from .fem.assembly import strain_rate
    s = v.space
    p = v.law.p if p is None else p
    if hasattr(w, "space"):
        if w.space is not s:
            raise RegionMismatch("fields live on different meshes")
        _, _, _, Gw = w.qp_fields
    else:
        w = np.asarray(w, dtype=float)
        if w.shape != (s.n_nodes, 2):
            raise RegionMismatch(f"probe has shape {w.shape}, expected {(s.n_nodes, 2)}")
        _, Gw = s.velocity_at_qp(w)
    _, _, _, Gv = v.qp_fields
    Dv = strain_rate(Gv)
    Dw = strain_rate(Gw)
    nv = np.sqrt(np.sum(Dv * Dv, axis=(-1, -2)))
    nw2 = np.sum(Dw * Dw, axis=(-1, -2))
    weight = np.ones_like(nv) if p == 2 else np.where(nv > 0, nv, 0.0) ** (p - 2)
    W = s.weights if window is None else s.weights * (np.abs(s.points[..., 0]) <= window)
    return float(np.sum(W * weight * nw2))


# ---------------------------------------------------------------------------
# exponents


@dataclass(frozen=True)
class Exponents:
    p: Fraction
    n: int
    p_conj: Fraction
    p_star: Fraction = None
    p_star_infinite: bool = False
    q: Fraction = None
    q_any: bool = False
    l: Fraction = None

    def to_dict(self):
        def f(x):
            return None if x is None else str(x)
        return {"p": f(self.p), "n": self.n, "p_conj": f(self.p_conj),
                "p_star": f(self.p_star), "p_star_infinite": self.p_star_infinite,
                "q": f(self.q), "q_any": self.q_any, "l": f(self.l)}


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(x).limit_denominator(10 ** 9)


def exponents(p, n):
    """Exact exponents for the regularity statement.

    For ``n = 2`` the integrability ``q`` may be any number in ``[1, inf)``;
    this is reported by ``q_any`` with ``q`` and ``l`` left unset.
    """
    if n not in (2, 3):
        raise BadExponent(f"dimension must be 2 or 3, got {n}")
    pf = _as_fraction(p)
    if pf < 2:
        raise BadExponent(f"p must be >= 2, got {p}")
    pc = pf / (pf - 1)
    if pf < n:
        ps, inf = n * pf / (n - pf), False
    else:
        ps, inf = None, True
    if n == 3:
        q = 2 * pf + 2
        l = 2 * q / (pf + q - 2)
        return Exponents(pf, n, pc, ps, inf, q, False, l)
    return Exponents(pf, n, pc, ps, inf, None, True, None)
