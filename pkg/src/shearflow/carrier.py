"""Divergence-free flux carriers.

In 2D the carrier is ``a = alpha * perp_grad(zeta)`` with the stream function
``zeta = psi(x2 / rho(x))``; ``rho`` is a smooth surrogate of the distance to
the walls and ``psi`` a C2 smoothstep.  ``zeta`` vanishes on the lower half of
the channel and equals one near the upper wall, so the flux through every
section is ``zeta(top) - zeta(bottom) = 1`` and ``a`` vanishes near the walls.

In 3D (axisymmetric pipes) the carrier is ``curl(zeta b) = grad(zeta) x b``
with ``b`` the angle form of the transverse plane, ``zeta = psi(|x'| / rho)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .errors import EvaluationTooCloseToAxis, OutsideDomain
from .fem.quadrature import gauss_legendre
from .geometry import CrossSection


@dataclass(frozen=True)
class Cutoff:
    """Quintic smoothstep from 0 at ``s0`` to 1 at ``s1``."""

    s0: float = 0.0
    s1: float = 1.0

    @property
    def length(self):
        return self.s1 - self.s0

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        L = self.length
        tau = np.clip((s - self.s0) / L, 0.0, 1.0)
        psi = tau**3 * (10.0 + tau * (-15.0 + 6.0 * tau))
        dpsi = 30.0 * tau**2 * (tau - 1.0) ** 2 / L
        d2psi = 60.0 * tau * (tau - 1.0) * (2.0 * tau - 1.0) / L**2
        return psi, dpsi, d2psi

    @property
    def sup_d1(self):
        return 1.875 / self.length

    @property
    def sup_d2(self):
        # |60 tau (tau-1)(2tau-1)| peaks at tau = 1/2 -+ 1/(2 sqrt 3)
        return 10.0 / math.sqrt(3.0) / self.length**2


CUTOFF_2D = Cutoff(0.0, 1.0)
CUTOFF_3D = Cutoff(1.0, 2.0)


def cutoff_psi(params, s):
    return params(s)


# ---------------------------------------------------------------------------
# regularised distance


@dataclass(frozen=True)
class RegularizedDistance:
    """``rho = softmin_beta(f2 - x2, x2 - f1) + beta * log 2``.

    The shift makes ``rho >= min(f2 - x2, x2 - f1) >= dist(x, walls)``.
    """

    domain: object
    beta: float = None

    def __post_init__(self):
        if self.beta is None:
            object.__setattr__(self, "beta", self.domain.l1 / 8.0)

    def evaluate(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x1, x2 = pts[:, 0], pts[:, 1]
        lo, up = self.domain.lower, self.domain.upper
        f1, f2 = lo.value(x1), up.value(x1)
        g1, g2 = lo.d1(x1), up.d1(x1)
        h1, h2 = lo.d2(x1), up.d2(x1)
        b = self.beta
        u = f2 - x2
        v = x2 - f1
        lse = np.logaddexp(-u / b, -v / b)
        rho = -b * lse + b * math.log(2.0)
        wu = np.exp(-u / b - lse)
        wv = 1.0 - wu
        gu = np.column_stack([g2, -np.ones_like(x1)])
        gv = np.column_stack([-g1, np.ones_like(x1)])
        grad = wu[:, None] * gu + wv[:, None] * gv
        diff = gu - gv
        hess = -(wu * wv / b)[:, None, None] * np.einsum("ni,nj->nij", diff, diff)
        hess[:, 0, 0] += wu * h2 - wv * h1
        return rho, grad, hess


def regularized_distance(domain, x, tol=0.0):
    """``(rho, grad rho, hess rho)`` at interior points ``x``."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    if not np.all(domain.contains(pts, tol)):
        raise OutsideDomain("regularized distance is only defined inside the domain")
    return RegularizedDistance(domain).evaluate(pts)


def distance_bound_constants(domain, points):
    """Measured ``k1 = max |grad rho|`` and ``k2 = max d |hess rho|`` together
    with the range of ``rho / d`` over the given interior points."""
    rho, g, H = RegularizedDistance(domain).evaluate(points)
    d = domain.boundary_distance(points)
    return {
        "k1": float(np.max(np.linalg.norm(g, axis=1))),
        "k2": float(np.max(d * np.linalg.norm(H, axis=(1, 2)))),
        "ratio_min": float(np.min(rho / d)),
        "ratio_max": float(np.max(rho / d)),
    }


# ---------------------------------------------------------------------------
# 2D carrier


@dataclass
class CarrierField:
    """Flux carrier ``a = alpha * a_tilde`` for a planar outlet domain."""

    domain: object
    alpha: float
    cutoff: Cutoff = CUTOFF_2D
    beta: float = None
    dim: int = 2
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alpha = float(self.alpha)
        self._rho = RegularizedDistance(self.domain, self.beta)

    def stream(self, points):
        """``zeta`` with its gradient and Hessian."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x2 = pts[:, 1]
        rho, grho, hrho = self._rho.evaluate(pts)
        s = x2 / rho
        psi, dpsi, d2psi = self.cutoff(s)
        e2 = np.zeros_like(grho)
        e2[:, 1] = 1.0
        gs = e2 / rho[:, None] - (x2 / rho**2)[:, None] * grho
        hs = (-(np.einsum("ni,nj->nij", e2, grho) + np.einsum("ni,nj->nij", grho, e2))
              / (rho**2)[:, None, None]
              + (2 * x2 / rho**3)[:, None, None] * np.einsum("ni,nj->nij", grho, grho)
              - (x2 / rho**2)[:, None, None] * hrho)
        gz = dpsi[:, None] * gs
        hz = d2psi[:, None, None] * np.einsum("ni,nj->nij", gs, gs) + dpsi[:, None, None] * hs
        return psi, gz, hz

    def evaluate_unit(self, points):
        """``a_tilde`` and its gradient ``G[:, i, j] = d a_i / d x_j``."""
        _, gz, hz = self.stream(points)
        a = np.column_stack([gz[:, 1], -gz[:, 0]])
        grad = np.stack([hz[:, 1, :], -hz[:, 0, :]], axis=1)
        return a, grad

    def evaluate(self, points):
        a, grad = self.evaluate_unit(points)
        return self.alpha * a, self.alpha * grad

    def __call__(self, points):
        return self.evaluate(points)[0]

    def divergence(self, points):
        _, grad = self.evaluate(points)
        return grad[:, 0, 0] + grad[:, 1, 1]

    def support_top(self, x1):
        """Upper end ``x2*`` of the transition band ``0 < x2 < x2*`` at ``x1``;
        ``zeta`` is constant outside it."""
        f2 = float(self.domain.upper.value(x1))

        def g(y):
            rho = self._rho.evaluate([[x1, y]])[0][0]
            return y - self.cutoff.s1 * rho

        return brentq(g, 0.0, f2, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def build_carrier_2d(domain, alpha, n_samples=20000, seed=0, sample_halfwidth=10.0):
    """Carrier of flux ``alpha`` with sup-bounds measured on a random sample."""
    car = CarrierField(domain, alpha)
    car.bounds = sample_bounds(car, n_samples, seed, sample_halfwidth)
    return car


def sample_bounds(carrier, n_samples=20000, seed=0, halfwidth=10.0):
    rng = np.random.default_rng(seed)
    dom = carrier.domain
    x1 = rng.uniform(-halfwidth, halfwidth, n_samples)
    f1, f2 = dom.lower.value(x1), dom.upper.value(x1)
    x2 = f1 + rng.uniform(0, 1, n_samples) * (f2 - f1)
    a, g = carrier.evaluate(np.column_stack([x1, x2]))
    return {"sup_a": float(np.max(np.linalg.norm(a, axis=1))),
            "sup_grad_a": float(np.max(np.linalg.norm(g, axis=(1, 2))))}


@dataclass(frozen=True)
class FluxEstimate:
    value: float
    error: float


def verify_flux(carrier, section, n=64):
    """Gauss quadrature of ``a . n`` over a section, split where the
    stream function stops being constant.  ``error`` compares ``n`` against
    ``n // 2`` points."""
    if carrier.dim == 3:
        return _verify_flux_3d(carrier, section, n)
    if not isinstance(section, CrossSection):
        raise TypeError("expected a CrossSection")
    x1 = section.x1
    top = min(carrier.support_top(x1), section.upper)
    lo = max(0.0, section.lower)

    def quad(m):
        if top <= lo:
            return 0.0
        y, w = gauss_legendre(m, lo, top)
        a, _ = carrier.evaluate(np.column_stack([np.full(m, x1), y]))
        return float(np.dot(w, a[:, 0]))

    # zeta is identically 0 below lo and identically 1 above top
    full = quad(n)
    half = quad(max(2, n // 2))
    return FluxEstimate(full, abs(full - half))


# ---------------------------------------------------------------------------
# 3D carrier (pointwise)


@dataclass(frozen=True)
class AxisymmetricOutlet:
    """Pipe ``|x'| < R(x1)`` containing the cylinder of radius ``l1 / 2``."""

    radius: object
    l1: float

    def __post_init__(self):
        xs = np.linspace(-50, 50, 20001)
        if np.any(self.radius.value(xs) < self.l1 / 2 - 1e-12):
            from .errors import CylinderViolation
            raise CylinderViolation("pipe radius smaller than l1/2")


@dataclass
class CarrierField3D:
    outlet: AxisymmetricOutlet
    alpha: float
    cutoff: Cutoff = CUTOFF_3D
    dim: int = 3
    bounds: dict = field(default_factory=dict)

    def _zeta(self, pts):
        x1 = pts[:, 0]
        xp = pts[:, 1:]
        r = np.linalg.norm(xp, axis=1)
        R = self.outlet.radius.value(x1)
        dR = self.outlet.radius.d1(x1)
        d2R = self.outlet.radius.d2(x1)
        rho = R - r
        s = r / rho
        psi, dpsi, d2psi = self.cutoff(s)
        near_axis = r < 1e-12 * np.maximum(R, 1.0)
        if np.any(near_axis & (s >= self.cutoff.s0)):
            raise EvaluationTooCloseToAxis("stream function not constant near the axis")
        safe_r = np.where(near_axis, 1.0, r)
        n = len(pts)
        gr = np.zeros((n, 3))
        gr[:, 1:] = xp / safe_r[:, None]
        hr = np.zeros((n, 3, 3))
        hr[:, 1:, 1:] = (np.eye(2)[None] - np.einsum("ni,nj->nij", gr[:, 1:], gr[:, 1:])) / safe_r[:, None, None]
        grho = -gr.copy()
        grho[:, 0] += dR
        hrho = -hr.copy()
        hrho[:, 0, 0] += d2R
        outer = lambda a, b: np.einsum("ni,nj->nij", a, b)
        gs = gr / rho[:, None] - (r / rho**2)[:, None] * grho
        hs = (hr / rho[:, None, None]
              - (outer(gr, grho) + outer(grho, gr)) / (rho**2)[:, None, None]
              + (2 * r / rho**3)[:, None, None] * outer(grho, grho)
              - (r / rho**2)[:, None, None] * hrho)
        gz = dpsi[:, None] * gs
        hz = d2psi[:, None, None] * outer(gs, gs) + dpsi[:, None, None] * hs
        gz[near_axis] = 0.0
        hz[near_axis] = 0.0
        return psi, gz, hz, safe_r, near_axis

    @staticmethod
    def angle_form(pts):
        """``b = (0, -x3, x2) / (2 pi |x'|^2)`` and its gradient."""
        x2, x3 = pts[:, 1], pts[:, 2]
        r2 = x2**2 + x3**2
        b = np.column_stack([np.zeros_like(x2), -x3, x2]) / (2 * np.pi * r2)[:, None]
        gb = np.zeros((len(pts), 3, 3))
        c = 1.0 / (2 * np.pi * r2**2)
        # d/dx2, d/dx3 of (-x3/r2, x2/r2)
        gb[:, 1, 1] = 2 * x2 * x3 * c
        gb[:, 1, 2] = (x3**2 - x2**2) * c
        gb[:, 2, 1] = (x3**2 - x2**2) * c
        gb[:, 2, 2] = -2 * x2 * x3 * c
        return b, gb

    def evaluate_unit(self, points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        _, gz, hz, _, near_axis = self._zeta(pts)
        safe = pts.copy()
        safe[near_axis, 1] = 1.0
        b, gb = self.angle_form(safe)
        # a_i = eps_ijk dz_j b_k ;  d_m a_i = eps_ijk (dz_jm b_k + dz_j db_k/dx_m)
        eps = np.zeros((3, 3, 3))
        eps[0, 1, 2] = eps[1, 2, 0] = eps[2, 0, 1] = 1.0
        eps[0, 2, 1] = eps[2, 1, 0] = eps[1, 0, 2] = -1.0
        a = np.einsum("ijk,nj,nk->ni", eps, gz, b)
        grad = (np.einsum("ijk,njm,nk->nim", eps, hz, b)
                + np.einsum("ijk,nj,nkm->nim", eps, gz, gb))
        return a, grad

    def evaluate(self, points):
        a, g = self.evaluate_unit(points)
        return self.alpha * a, self.alpha * g

    def divergence(self, points):
        _, g = self.evaluate(points)
        return np.trace(g, axis1=1, axis2=2)


def build_carrier_3d(outlet, alpha):
    return CarrierField3D(outlet, float(alpha))


@dataclass(frozen=True)
class DiskSection:
    x1: float
    radius: float = None


def angle_form_circulation(radius, n=256):
    """Line integral of the angle form around the circle ``|x'| = radius``."""
    th = np.linspace(0, 2 * np.pi, n, endpoint=False)
    pts = np.column_stack([np.zeros(n), radius * np.cos(th), radius * np.sin(th)])
    b, _ = CarrierField3D.angle_form(pts)
    tangent = np.column_stack([np.zeros(n), -np.sin(th), np.cos(th)]) * radius
    return float(np.sum(np.einsum("ni,ni->n", b, tangent)) * 2 * np.pi / n)


def _verify_flux_3d(carrier, section, n):
    """Polar Gauss quadrature of ``a . e1`` over a disk section."""
    R = float(carrier.outlet.radius.value(section.x1)) if section.radius is None else section.radius

    def quad(m):
        # integrand depends on r only through zeta; split at the cutoff band
        r_lo = R * carrier.cutoff.s0 / (1 + carrier.cutoff.s0)
        r_hi = R * carrier.cutoff.s1 / (1 + carrier.cutoff.s1)
        r, wr = gauss_legendre(m, r_lo, r_hi)
        th = np.linspace(0, 2 * np.pi, 16, endpoint=False)
        rr, tt = np.meshgrid(r, th, indexing="ij")
        pts = np.column_stack([np.full(rr.size, section.x1), (rr * np.cos(tt)).ravel(),
                               (rr * np.sin(tt)).ravel()])
        a, _ = carrier.evaluate(pts)
        f = a[:, 0].reshape(rr.shape) * rr
        return float(np.sum(wr[:, None] * f) * 2 * np.pi / len(th))

    full, half = quad(n), quad(max(2, n // 2))
    return FluxEstimate(full, abs(full - half))


# ---------------------------------------------------------------------------
# estimates i) - iii)


def default_probes(domain, t, n=3):
    """Smooth fields vanishing on the walls and on the cuts ``|x1| = t``."""
    lo, up = domain.lower, domain.upper

    def make(k):
        w = k * np.pi / t

        def probe(points):
            x1, x2 = points[:, 0], points[:, 1]
            f1, f2 = lo.value(x1), up.value(x1)
            g1, g2 = lo.d1(x1), up.d1(x1)
            B = (x2 - f1) * (f2 - x2) * (t * t - x1 * x1)
            dB1 = ((-g1) * (f2 - x2) + (x2 - f1) * g2) * (t * t - x1 * x1) \
                + (x2 - f1) * (f2 - x2) * (-2 * x1)
            dB2 = ((f2 - x2) - (x2 - f1)) * (t * t - x1 * x1)
            s, c = np.sin(w * x1), np.cos(w * x1)
            val = np.column_stack([B * s, B * c])
            grad = np.empty((len(x1), 2, 2))
            grad[:, 0, 0] = dB1 * s + B * w * c
            grad[:, 0, 1] = dB2 * s
            grad[:, 1, 0] = dB1 * c - B * w * s
            grad[:, 1, 1] = dB2 * c
            return val, grad

        return probe

    return [make(k) for k in range(1, n + 1)]


def verify_lemma_a_estimates(carrier, mesh, p, t, probes=None, quad_degree=6):
    """Measured constants of the three carrier estimates on ``Omega_t``.

    Returns ``{"C_i", "C_ii", "C_iii"}``; with ``alpha = 0`` every ratio is
    reported as zero.
    """
    from .fem.space import TaylorHoodSpace

    if p < 2:
        from .errors import BadExponent
        raise BadExponent("p must be >= 2")
    if carrier.alpha == 0:
        return {"C_i": 0.0, "C_ii": 0.0, "C_iii": 0.0}
    space = TaylorHoodSpace(mesh, quad_degree)
    X = space.points.reshape(-1, 2)
    W = space.weights.ravel()
    a, ga = carrier.evaluate(X)
    x1 = X[:, 0]
    inside = np.abs(x1) < t
    alpha = abs(carrier.alpha)
    pc = p / (p - 1)
    grad_p = np.linalg.norm(ga, axis=(1, 2)) ** p
    C_iii = float(np.sum(W * grad_p * inside) / (alpha**p * (t + 1)))
    slices = []
    for k in range(1, int(math.floor(t)) + 1):
        for sign in (-1, 1):
            s = sign * x1
            m = (s > k - 1) & (s < k)
            slices.append(np.sum(W * grad_p * m))
    C_ii = float(max(slices) / alpha**p) if slices else 0.0
    probes = default_probes(carrier.domain, t) if probes is None else probes
    ratios = []
    a_norm = np.linalg.norm(a, axis=1)
    for probe in probes:
        phi, gphi = probe(X)
        num = np.sum(W * inside * (a_norm * np.linalg.norm(phi, axis=1)) ** pc)
        semi = np.sum(W * inside * np.linalg.norm(gphi, axis=(1, 2)) ** p) ** (1 / p)
        ratios.append(num / (alpha**pc * t ** ((p - 2) / (p - 1)) * semi**pc))
    return {"C_i": float(max(ratios)), "C_ii": C_ii, "C_iii": C_iii}
