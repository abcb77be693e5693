"""Outlet domains, truncations, slices, cross-sections and meshes.

Outlets are graph domains ``f1(x1) < x2 < f2(x1)`` in a single global chart:
outlet 1 is the half ``x1 < 0`` and outlet 2 the half ``x1 > 0``.  The core
is the interface ``x1 = 0``; a bulge is modelled with a bump profile.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    BadInterval,
    CylinderViolation,
    DiameterViolation,
    MeshFailure,
    NonPositiveLength,
    WrongSide,
)

# Boundary edge tags.
LOWER_WALL = 1
UPPER_WALL = 2
CUT_LEFT = 3
CUT_RIGHT = 4
WALL_TAGS = (LOWER_WALL, UPPER_WALL)
CUT_TAGS = (CUT_LEFT, CUT_RIGHT)


# ---------------------------------------------------------------------------
# wall profiles


class Profile:
    """A C2 scalar curve ``x1 -> f(x1)`` with analytic derivatives."""

    kind = "abstract"

    def __call__(self, x):
        return self.value(x)

    def value(self, x):
        raise NotImplementedError

    def d1(self, x):
        raise NotImplementedError

    def d2(self, x):
        raise NotImplementedError

    def negated(self):
        return NegatedProfile(self)

    def to_dict(self):
        raise NotImplementedError


@dataclass(frozen=True)
class ConstantProfile(Profile):
    level: float
    kind = "constant"

    def value(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.level)

    def d1(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def d2(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def to_dict(self):
        return {"kind": "constant", "level": self.level}


@dataclass(frozen=True)
class SineProfile(Profile):
    """``mean + amplitude * sin(frequency * x1 + phase)``."""

    mean: float
    amplitude: float
    frequency: float = 1.0
    phase: float = 0.0
    kind = "sine"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return self.mean + self.amplitude * np.sin(self.frequency * x + self.phase)

    def d1(self, x):
        x = np.asarray(x, dtype=float)
        return self.amplitude * self.frequency * np.cos(self.frequency * x + self.phase)

    def d2(self, x):
        x = np.asarray(x, dtype=float)
        w = self.frequency
        return -self.amplitude * w * w * np.sin(w * x + self.phase)

    def to_dict(self):
        return {"kind": "sine", "mean": self.mean, "amplitude": self.amplitude,
                "frequency": self.frequency, "phase": self.phase}


@dataclass(frozen=True)
class BumpProfile(Profile):
    """Gaussian bulge ``base + height * exp(-((x1 - center) / width)**2)``."""

    base: float
    height: float
    width: float = 1.0
    center: float = 0.0
    kind = "bump"

    def _g(self, x):
        s = (np.asarray(x, dtype=float) - self.center) / self.width
        return s, np.exp(-s * s)

    def value(self, x):
        _, g = self._g(x)
        return self.base + self.height * g

    def d1(self, x):
        s, g = self._g(x)
        return self.height * g * (-2.0 * s) / self.width

    def d2(self, x):
        s, g = self._g(x)
        return self.height * g * (4.0 * s * s - 2.0) / self.width**2

    def to_dict(self):
        return {"kind": "bump", "base": self.base, "height": self.height,
                "width": self.width, "center": self.center}


class TableProfile(Profile):
    """Tabulated wall, clamped cubic spline, constant beyond the table."""

    kind = "table"

    def __init__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape or x.size < 2:
            raise ValueError("table profile needs matching 1-D x and y arrays")
        if np.any(np.diff(x) <= 0):
            raise ValueError("table abscissae must be strictly increasing")
        self.x = x
        self.y = y
        # zero end slopes make the constant extension C1
        self._spline = CubicSpline(x, y, bc_type="clamped")

    def _clip(self, x):
        return np.clip(np.asarray(x, dtype=float), self.x[0], self.x[-1])

    def _inside(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.x[0]) & (x <= self.x[-1])

    def value(self, x):
        return self._spline(self._clip(x))

    def d1(self, x):
        return np.where(self._inside(x), self._spline(self._clip(x), 1), 0.0)

    def d2(self, x):
        return np.where(self._inside(x), self._spline(self._clip(x), 2), 0.0)

    def to_dict(self):
        return {"kind": "table", "x": self.x.tolist(), "y": self.y.tolist()}

    def __eq__(self, other):
        return (isinstance(other, TableProfile) and np.array_equal(self.x, other.x)
                and np.array_equal(self.y, other.y))

    def __hash__(self):
        return hash((self.x.tobytes(), self.y.tobytes()))


@dataclass(frozen=True)
class NegatedProfile(Profile):
    base: Profile
    kind = "negated"

    def value(self, x):
        return -self.base.value(x)

    def d1(self, x):
        return -self.base.d1(x)

    def d2(self, x):
        return -self.base.d2(x)

    def negated(self):
        return self.base

    def to_dict(self):
        return {"kind": "negated", "of": self.base.to_dict()}


_PROFILE_KEYS = {
    "constant": {"level"},
    "sine": {"mean", "amplitude", "frequency", "phase"},
    "bump": {"base", "height", "width", "center"},
    "table": {"x", "y"},
}


def profile_from_dict(spec):
    """Build a profile from a JSON-style descriptor ``{"kind": ..., params}``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("profile descriptor must be an object with a 'kind'")
    kind = spec["kind"]
    params = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "negated":
        return NegatedProfile(profile_from_dict(params["of"]))
    if kind not in _PROFILE_KEYS:
        raise ValueError(f"unknown profile kind {kind!r}")
    unknown = set(params) - _PROFILE_KEYS[kind]
    if unknown:
        raise ValueError(f"unknown keys for {kind} profile: {sorted(unknown)}")
    if kind == "constant":
        return ConstantProfile(float(params["level"]))
    if kind == "sine":
        return SineProfile(**{k: float(v) for k, v in params.items()})
    if kind == "bump":
        return BumpProfile(**{k: float(v) for k, v in params.items()})
    return TableProfile(params["x"], params["y"])


# ---------------------------------------------------------------------------
# domains


@dataclass(frozen=True)
class OutletDomain:
    """Two-outlet planar domain between the walls ``lower`` and ``upper``.

    ``l1`` is the width of the cylinder contained in both outlets and ``l2``
    the uniform bound on cross-section diameters.
    """

    lower: Profile
    upper: Profile
    l1: float
    l2: float
    sample_range: tuple = (-50.0, 50.0)
    n_outlets: int = 2

    def width(self, x1):
        return self.upper.value(x1) - self.lower.value(x1)

    def contains(self, points, tol=0.0):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x1, x2 = pts[:, 0], pts[:, 1]
        return (x2 > self.lower.value(x1) - tol) & (x2 < self.upper.value(x1) + tol)

    def vertical_distance(self, points):
        """``min(f2 - x2, x2 - f1)``; an upper bound for the true distance."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        x1, x2 = pts[:, 0], pts[:, 1]
        return np.minimum(self.upper.value(x1) - x2, x2 - self.lower.value(x1))

    def boundary_distance(self, points, reach=None, n=4001):
        """Euclidean distance to the walls by dense sampling of both curves."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        reach = self.l2 if reach is None else reach
        s = np.linspace(-reach, reach, n)
        out = np.empty(len(pts))
        for k, (a, b) in enumerate(pts):
            xs = a + s
            best = np.inf
            for prof in (self.lower, self.upper):
                ys = prof.value(xs)
                best = min(best, np.min(np.hypot(xs - a, ys - b)))
            out[k] = best
        return out

    def to_dict(self):
        return {"lower": self.lower.to_dict(), "upper": self.upper.to_dict(),
                "l1": self.l1, "l2": self.l2}


def build_outlet_domain(spec=None, *, upper=None, lower=None, l1=None, l2=None,
                        sample_range=(-50.0, 50.0), n_samples=20001):
    """Validate wall profiles against the cylinder and diameter bounds.

    ``spec`` is the JSON document form ``{"profile": ..., "lower": ...,
    "l1": ..., "l2": ...}``; a missing ``lower`` mirrors the upper wall.
    Keyword arguments override the document.
    """
    if spec is not None:
        unknown = set(spec) - {"profile", "lower", "l1", "l2", "sample_range"}
        if unknown:
            raise ValueError(f"unknown domain keys: {sorted(unknown)}")
        upper = upper if upper is not None else profile_from_dict(spec["profile"])
        if lower is None and spec.get("lower") is not None:
            lower = profile_from_dict(spec["lower"])
        l1 = spec["l1"] if l1 is None else l1
        l2 = spec["l2"] if l2 is None else l2
        if "sample_range" in spec:
            sample_range = tuple(spec["sample_range"])
    if upper is None or l1 is None or l2 is None:
        raise ValueError("need an upper profile and both l1 and l2")
    if isinstance(upper, dict):
        upper = profile_from_dict(upper)
    if isinstance(lower, dict):
        lower = profile_from_dict(lower)
    if lower is None:
        lower = upper.negated()
    l1, l2 = float(l1), float(l2)
    if not (l1 > 0 and l2 > 0):
        raise ValueError("l1 and l2 must be positive")
    if l1 > l2:
        raise ValueError(f"l1 = {l1} exceeds l2 = {l2}")

    xs = np.linspace(sample_range[0], sample_range[1], n_samples)
    if isinstance(upper, TableProfile):
        xs = np.union1d(xs, upper.x)
    if isinstance(lower, TableProfile):
        xs = np.union1d(xs, lower.x)
    fl, fu = lower.value(xs), upper.value(xs)
    tol = 1e-12 * max(1.0, l2)
    if np.any(fu < l1 / 2 - tol):
        k = int(np.argmin(fu))
        raise CylinderViolation(f"upper wall {fu[k]:.6g} < l1/2 at x1 = {xs[k]:.6g}")
    if np.any(fl > -l1 / 2 + tol):
        k = int(np.argmax(fl))
        raise CylinderViolation(f"lower wall {fl[k]:.6g} > -l1/2 at x1 = {xs[k]:.6g}")
    if np.any(fu - fl > l2 + tol):
        k = int(np.argmax(fu - fl))
        raise DiameterViolation(f"width {fu[k] - fl[k]:.6g} > l2 at x1 = {xs[k]:.6g}")
    return OutletDomain(lower, upper, l1, l2, tuple(sample_range))


def straight_channel(width=1.0):
    half = width / 2
    return build_outlet_domain(upper=ConstantProfile(half), lower=ConstantProfile(-half),
                               l1=width, l2=width)


def wavy_channel(mean=0.75, amplitude=0.2, frequency=1.0, l1=1.0, l2=2.0):
    return build_outlet_domain(upper=SineProfile(mean, amplitude, frequency), l1=l1, l2=l2)


def _gauss_integral(func, a, b, n_panels=None, order=16):
    """Composite Gauss-Legendre quadrature of a vectorised scalar function."""
    if n_panels is None:
        n_panels = max(1, int(math.ceil(b - a)) * 4)
    xg, wg = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(a, b, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])[:, None]
    half = 0.5 * (edges[1:] - edges[:-1])[:, None]
    x = mid + half * xg[None, :]
    return float(np.sum(func(x) * wg[None, :] * half))


@dataclass(frozen=True)
class TruncatedDomain:
    """``Omega_t``: the part of the domain with ``|x1| < t``."""

    domain: OutletDomain
    t: float

    def contains(self, points, tol=1e-12):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return (np.abs(pts[:, 0]) <= self.t + tol) & self.domain.contains(pts, tol)

    def area(self):
        return _gauss_integral(self.domain.width, -self.t, self.t)

    def slice(self, i, t0, t1):
        return slice_region(self.domain, i, t0, t1)


def truncate(domain, t):
    if not t > 0:
        raise NonPositiveLength(f"truncation length must be positive, got {t}")
    return TruncatedDomain(domain, float(t))


@dataclass(frozen=True)
class SliceRegion:
    """``{x in Omega_i : t0 < (-1)^i x1 < t1}``."""

    domain: OutletDomain
    outlet: int
    t0: float
    t1: float

    @property
    def x1_range(self):
        if self.outlet == 2:
            return self.t0, self.t1
        return -self.t1, -self.t0

    def contains_x1(self, x1):
        s = x1 if self.outlet == 2 else -x1
        return (s > self.t0) & (s < self.t1)

    def contains(self, points, tol=0.0):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return self.contains_x1(pts[:, 0]) & self.domain.contains(pts, tol)

    def area(self):
        a, b = self.x1_range
        return _gauss_integral(self.domain.width, a, b)


def slice_region(domain, i, t0, t1):
    if i not in (1, 2):
        raise ValueError("outlet index must be 1 or 2")
    if not (0 <= t0 < t1):
        raise BadInterval(f"need 0 <= t0 < t1, got ({t0}, {t1})")
    return SliceRegion(domain, i, float(t0), float(t1))


@dataclass(frozen=True)
class CrossSection:
    x1: float
    lower: float
    upper: float
    outlet: int
    normal: tuple = (1.0, 0.0)

    @property
    def length(self):
        return self.upper - self.lower


def cross_section(domain, i, x1):
    """Vertical section at ``x1``; the normal always points toward outlet 2."""
    if i not in (1, 2):
        raise ValueError("outlet index must be 1 or 2")
    if (-1) ** i * x1 < 0:
        raise WrongSide(f"x1 = {x1} is not on the side of outlet {i}")
    lo = float(domain.lower.value(x1))
    hi = float(domain.upper.value(x1))
    return CrossSection(float(x1), lo, hi, i)


# ---------------------------------------------------------------------------
# meshes


@dataclass
class Mesh:
    """Conforming triangulation with tagged boundary edges.

    Triangles are counter-clockwise.  ``boundary_edges`` holds vertex pairs
    and ``edge_tags`` one of the tag constants per edge.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray
    h: float
    region: object = None
    meta: dict = field(default_factory=dict)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def area(self):
        return float(np.sum(self.signed_areas()))

    def edges_with_tags(self, tags):
        return self.boundary_edges[np.isin(self.edge_tags, tags)]

    def boundary_vertices(self, tags=None):
        edges = self.boundary_edges if tags is None else self.edges_with_tags(tags)
        return np.unique(edges)

    @cached_property
    def _centroid_tree(self):
        from scipy.spatial import cKDTree
        return cKDTree(self.vertices[self.triangles].mean(axis=1))

    def locate(self, points):
        """Index of a triangle containing each point (-1 if none) and its
        barycentric coordinates."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        k = min(12, self.n_triangles)
        _, cand = self._centroid_tree.query(pts, k=k)
        cand = np.atleast_2d(cand).reshape(len(pts), k)
        owner = np.full(len(pts), -1)
        bary = np.zeros((len(pts), 3))
        best = np.full(len(pts), -np.inf)
        for j in range(k):
            tri = self.triangles[cand[:, j]]
            lam = _barycentric(self.vertices[tri], pts)
            score = lam.min(axis=1)
            better = score > best
            best = np.where(better, score, best)
            owner = np.where(better, cand[:, j], owner)
            bary = np.where(better[:, None], lam, bary)
        owner[best < -1e-9] = -1
        return owner, bary


def _barycentric(tri_pts, pts):
    a, b, c = tri_pts[:, 0], tri_pts[:, 1], tri_pts[:, 2]
    v0, v1, v2 = b - a, c - a, pts - a
    det = v0[:, 0] * v1[:, 1] - v0[:, 1] * v1[:, 0]
    l1 = (v2[:, 0] * v1[:, 1] - v2[:, 1] * v1[:, 0]) / det
    l2 = (v0[:, 0] * v2[:, 1] - v0[:, 1] * v2[:, 0]) / det
    return np.column_stack([1 - l1 - l2, l1, l2])


def _mapped_grid(x1_nodes, lower, upper, ny, x_mid, meta):
    """Triangulate ``{x1 in nodes, lower(x1) <= x2 <= upper(x1)}``."""
    nx = len(x1_nodes) - 1
    eta = np.linspace(0.0, 1.0, ny + 1)
    lo = lower(x1_nodes)
    hi = upper(x1_nodes)
    X1 = np.repeat(x1_nodes, ny + 1)
    X2 = (lo[:, None] + eta[None, :] * (hi - lo)[:, None]).ravel()
    verts = np.column_stack([X1, X2])
    # pin wall vertices exactly on the profiles
    verts[0::ny + 1, 1] = lo
    verts[ny::ny + 1, 1] = hi

    def vid(i, j):
        return i * (ny + 1) + j

    I, J = np.meshgrid(np.arange(nx), np.arange(ny), indexing="ij")
    I, J = I.ravel(), J.ravel()
    a, b = vid(I, J), vid(I + 1, J)
    c, d = vid(I + 1, J + 1), vid(I, J + 1)
    xc = 0.5 * (x1_nodes[I] + x1_nodes[I + 1])
    ec = (J + 0.5) / ny
    # union-jack diagonals: every corner cell is split through its corner
    slash = (xc - x_mid) * (ec - 0.5) > 0
    t1 = np.where(slash[:, None], np.column_stack([a, b, c]), np.column_stack([a, b, d]))
    t2 = np.where(slash[:, None], np.column_stack([a, c, d]), np.column_stack([b, c, d]))
    tris = np.empty((2 * len(I), 3), dtype=np.int64)
    tris[0::2] = t1
    tris[1::2] = t2

    i_all = np.arange(nx)
    j_all = np.arange(ny)
    edges = [
        (np.column_stack([vid(i_all, 0), vid(i_all + 1, 0)]), LOWER_WALL),
        (np.column_stack([vid(i_all, ny), vid(i_all + 1, ny)]), UPPER_WALL),
        (np.column_stack([vid(0, j_all), vid(0, j_all + 1)]), CUT_LEFT),
        (np.column_stack([vid(nx, j_all), vid(nx, j_all + 1)]), CUT_RIGHT),
    ]
    bedges = np.vstack([e for e, _ in edges])
    tags = np.concatenate([np.full(len(e), tag) for e, tag in edges])
    return verts, tris, bedges, tags


def _finalize(verts, tris, bedges, tags, h, region, meta):
    m = Mesh(verts, tris, bedges, tags, float(h), region, meta)
    areas = m.signed_areas()
    if np.any(areas <= 0):
        raise MeshFailure(f"{int(np.sum(areas <= 0))} degenerate or inverted triangles")
    return m


def mesh(region, h):
    """Mapped structured triangulation of a truncated domain.

    The x1 spacing is ``2t / ceil(2t / h)`` so that integer truncation lengths
    with ``h = 1/m`` put grid lines on every integer abscissa; meshes of
    nested truncations then coincide on the smaller one.
    """
    dom = region.domain
    if not h > 0:
        raise MeshFailure("mesh size must be positive")
    if h >= dom.l1 / 4:
        raise MeshFailure(f"h = {h} does not resolve the cylinder (need h < l1/4 = {dom.l1 / 4})")
    t = region.t
    nx = int(math.ceil(2 * t / h - 1e-9))
    x1_nodes = np.linspace(-t, t, nx + 1)
    wmax = float(np.max(dom.width(np.linspace(-t, t, 20 * nx + 1))))
    ny = max(2, int(math.ceil(wmax / h - 1e-9)))
    if ny % 2:
        ny += 1
    verts, tris, bedges, tags = _mapped_grid(x1_nodes, dom.lower.value, dom.upper.value,
                                             ny, 0.0, {})
    return _finalize(verts, tris, bedges, tags, h, region, {"nx": nx, "ny": ny, "t": t})


def rectangle_mesh(x0, x1, y0, y1, h):
    """Triangulated rectangle; bottom/top edges are tagged as walls and the
    left/right edges as cuts."""
    nx = max(2, int(math.ceil((x1 - x0) / h - 1e-9)))
    ny = max(2, int(math.ceil((y1 - y0) / h - 1e-9)))
    xs = np.linspace(x0, x1, nx + 1)
    verts, tris, bedges, tags = _mapped_grid(
        xs, lambda x: np.full_like(x, y0), lambda x: np.full_like(x, y1), ny,
        0.5 * (x0 + x1), {})
    return _finalize(verts, tris, bedges, tags, h, None, {"nx": nx, "ny": ny})


def unit_square_mesh(h):
    return rectangle_mesh(0.0, 1.0, 0.0, 1.0, h)
