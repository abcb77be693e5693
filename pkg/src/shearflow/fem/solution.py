"""Discrete solution of the truncated problem."""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .assembly import PowerLaw, strain_rate


@dataclass
class Solution:
    """Coefficient vector on a Taylor-Hood space plus its carrier and law.

    ``x`` holds component-major P2 velocity (the correction ``u``), P1
    pressure and the mean multiplier.  The physical velocity is
    ``v = u + a``.
    """

    space: object
    x: np.ndarray
    carrier: object = None
    law: PowerLaw = None
    converged: bool = True
    n_iter: int = 0
    history: list = field(default_factory=list)
    body_force: object = None

    @property
    def mesh(self):
        return self.space.mesh

    @cached_property
    def u(self):
        return self.space.split(self.x)[0]

    @property
    def pressure(self):
        return self.space.split(self.x)[1]

    @property
    def multiplier(self):
        return self.x[-1]

    @property
    def alpha(self):
        return 0.0 if self.carrier is None else float(self.carrier.alpha)

    def _carrier_at(self, pts):
        pts = np.asarray(pts, dtype=float)
        if self.carrier is None or self.carrier.alpha == 0:
            return np.zeros((len(pts), 2)), np.zeros((len(pts), 2, 2))
        return self.carrier.evaluate(pts)

    @cached_property
    def qp_fields(self):
        """``(u, grad u, v, grad v)`` at all quadrature points."""
        s = self.space
        uq, Gu = s.velocity_at_qp(self.u)
        nel, nq = s.weights.shape
        a, ga = self._carrier_at(s.points.reshape(-1, 2))
        v = uq + a.reshape(nel, nq, 2)
        Gv = Gu + ga.reshape(nel, nq, 2, 2)
        return uq, Gu, v, Gv

    def velocity(self, points):
        """Value and gradient of ``v = u + a`` at arbitrary points."""
        val, grad = self.space.evaluate_velocity(self.u, points)
        a, ga = self._carrier_at(np.atleast_2d(points))
        return val + a, grad + ga

    def strain_rate(self, points):
        return strain_rate(self.velocity(points)[1])

    def nodal_velocity(self):
        """``v`` at the P2 nodes."""
        a, _ = self._carrier_at(self.space.node_coords)
        return self.u + a

    def nodal_strain_norm(self):
        """``|D(v)|`` averaged over the elements sharing each P2 node."""
        s = self.space
        from .space import p2_basis
        ref_nodes = np.array([[0, 0], [1, 0], [0, 1], [.5, 0], [.5, .5], [0, .5]], float)
        _, dN_ref = p2_basis(ref_nodes)
        dN = np.einsum("kar,erj->ekaj", dN_ref, s._invJ)
        U = self.u[s.cell_nodes]
        G = np.einsum("ekaj,eai->ekij", dN, U)
        pts = s.node_coords[s.cell_nodes].reshape(-1, 2)
        _, ga = self._carrier_at(pts)
        G = G + ga.reshape(G.shape)
        D = strain_rate(G)
        dn = np.sqrt(np.sum(D * D, axis=(-1, -2)))
        acc = np.zeros(s.n_nodes)
        cnt = np.zeros(s.n_nodes)
        np.add.at(acc, s.cell_nodes, dn)
        np.add.at(cnt, s.cell_nodes, 1.0)
        return acc / cnt

    def divergence_residual(self):
        """Euclidean norm of the discrete continuity residual ``int q div u``."""
        s = self.space
        _, Gu, _, _ = self.qp_fields
        div = Gu[..., 0, 0] + Gu[..., 1, 1]
        r = np.zeros(s.n_pressure)
        np.add.at(r, s.mesh.triangles, np.einsum("eq,qk->ek", s.weights * div, s.M))
        return float(np.linalg.norm(r))

    def pressure_mean(self):
        s = self.space
        return float(np.sum(s.weights * s.pressure_at_qp(self.pressure)) / s.area.sum())

    def flux(self, x1, n=64):
        """Flux of ``v`` through the vertical segment at ``x1``."""
        from .quadrature import gauss_legendre
        dom = self.mesh.region.domain if hasattr(self.mesh.region, "domain") else None
        if dom is not None:
            lo, hi = float(dom.lower.value(x1)), float(dom.upper.value(x1))
        else:
            ys = self.mesh.vertices[:, 1]
            lo, hi = ys.min(), ys.max()
        y, w = gauss_legendre(n, lo, hi)
        pts = np.column_stack([np.full_like(y, x1), y])
        # nudge off the walls so point location never misses
        pts[:, 1] = np.clip(pts[:, 1], lo + 1e-12, hi - 1e-12)
        v, _ = self.velocity(pts)
        return float(w @ v[:, 0])
