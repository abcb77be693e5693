"""Continuous P2 velocity / P1 pressure space on a triangle mesh."""
from __future__ import annotations

from functools import cached_property

import numpy as np

from ..geometry import CUT_TAGS, WALL_TAGS
from .quadrature import triangle_rule

# local P2 node k >= 3 sits on the edge between these vertices
LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])


def p2_basis(xi):
    """Values and reference gradients of the six P2 shape functions."""
    x, y = xi[:, 0], xi[:, 1]
    l0, l1, l2 = 1 - x - y, x, y
    N = np.column_stack([l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                         4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0])
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    lam = [l0, l1, l2]
    dN = np.empty((len(x), 6, 2))
    for i in range(3):
        dN[:, i, :] = (4 * lam[i] - 1)[:, None] * dl[i]
    for k, (i, j) in enumerate(LOCAL_EDGES):
        dN[:, 3 + k, :] = 4 * (lam[i][:, None] * dl[j] + lam[j][:, None] * dl[i])
    return N, dN


def p1_basis(xi):
    x, y = xi[:, 0], xi[:, 1]
    N = np.column_stack([1 - x - y, x, y])
    dN = np.broadcast_to(np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]]), (len(x), 3, 2))
    return N, dN


class TaylorHoodSpace:
    """Degree-of-freedom maps and quadrature data for the P2-P1 pair.

    Velocity DOFs are ordered component-major (all x-components, then all
    y-components), followed by the P1 pressure DOFs and one multiplier
    enforcing a mean-zero pressure.
    """

    def __init__(self, mesh, quad_degree=6):
        self.mesh = mesh
        self.quad_degree = quad_degree
        tris = mesh.triangles
        nv = mesh.n_vertices
        local = tris[:, LOCAL_EDGES]                       # (nel, 3, 2)
        sorted_pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(sorted_pairs, axis=0, return_inverse=True)
        self.edges = edges
        self.cell_nodes = np.hstack([tris, nv + inverse.reshape(-1, 3)])
        self.n_nodes = nv + len(edges)
        self.node_coords = np.vstack([mesh.vertices, mesh.vertices[edges].mean(axis=1)])
        self.n_pressure = nv
        self.n_velocity = 2 * self.n_nodes
        self.n_dofs = self.n_velocity + self.n_pressure + 1

        # quadrature data
        xi, w = triangle_rule(quad_degree)
        self.ref_points, self.ref_weights = xi, w
        self.N, dN_ref = p2_basis(xi)
        self.M, _ = p1_basis(xi)
        p = mesh.vertices[tris]
        J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)   # columns
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        invJ = np.empty_like(J)
        invJ[:, 0, 0] = J[:, 1, 1] / det
        invJ[:, 1, 1] = J[:, 0, 0] / det
        invJ[:, 0, 1] = -J[:, 0, 1] / det
        invJ[:, 1, 0] = -J[:, 1, 0] / det
        self.area = 0.5 * det
        self.weights = self.area[:, None] * w[None, :]                   # (nel, nq)
        # physical gradient: dN/dx_j = sum_r dN/dxi_r * invJ[r, j]
        self.dN = np.einsum("qar,erj->eqaj", dN_ref, invJ)               # (nel, nq, 6, 2)
        self.points = p[:, 0][:, None, :] + np.einsum("eij,qj->eqi", J, xi)
        self._invJ = invJ

    # -- boundary bookkeeping ------------------------------------------------
    def _edge_index(self, pairs):
        lookup = {tuple(e): k for k, e in enumerate(self.edges)}
        return np.array([lookup[tuple(sorted(e))] for e in pairs], dtype=np.int64)

    def boundary_nodes(self, tags=None):
        m = self.mesh
        bedges = m.boundary_edges if tags is None else m.edges_with_tags(tags)
        if len(bedges) == 0:
            return np.zeros(0, dtype=np.int64)
        mids = m.n_vertices + self._edge_index(bedges)
        return np.unique(np.concatenate([bedges.ravel(), mids]))

    @cached_property
    def wall_nodes(self):
        return self.boundary_nodes(WALL_TAGS)

    @cached_property
    def cut_nodes(self):
        return self.boundary_nodes(CUT_TAGS)

    @cached_property
    def dirichlet_nodes(self):
        return self.boundary_nodes()

    def velocity_dofs(self, nodes):
        nodes = np.asarray(nodes, dtype=np.int64)
        return np.concatenate([nodes, nodes + self.n_nodes])

    def free_dofs(self, dirichlet_nodes=None):
        """Indices of the unknowns left after eliminating Dirichlet nodes."""
        nodes = self.dirichlet_nodes if dirichlet_nodes is None else dirichlet_nodes
        mask = np.ones(self.n_dofs, dtype=bool)
        mask[self.velocity_dofs(nodes)] = False
        return np.flatnonzero(mask)

    # -- local-to-global maps ---------------------------------------------------
    @cached_property
    def cell_velocity_dofs(self):
        """(nel, 12): component-major local ordering ``i * 6 + a``."""
        return np.hstack([self.cell_nodes, self.cell_nodes + self.n_nodes])

    @cached_property
    def cell_pressure_dofs(self):
        return self.mesh.triangles + self.n_velocity

    # -- field evaluation at quadrature points -----------------------------
    def velocity_at_qp(self, u):
        """Values (nel, nq, 2) and gradients (nel, nq, 2, 2) of a P2 field
        given as an (n_nodes, 2) array; ``G[..., i, j] = d u_i / d x_j``."""
        U = u[self.cell_nodes]                                            # (nel, 6, 2)
        val = np.einsum("qa,eai->eqi", self.N, U)
        grad = np.einsum("eqaj,eai->eqij", self.dN, U)
        return val, grad

    def pressure_at_qp(self, p):
        return np.einsum("qa,ea->eq", self.M, p[self.mesh.triangles])

    def scalar_p2_at_qp(self, s):
        S = s[self.cell_nodes]
        return np.einsum("qa,ea->eq", self.N, S), np.einsum("eqaj,ea->eqj", self.dN, S)

    def interpolate(self, func):
        """Nodal P2 interpolant of ``func(points) -> (n, 2)`` or ``(n,)``."""
        return np.asarray(func(self.node_coords), dtype=float)

    def split(self, x):
        """Full DOF vector -> (velocity (n_nodes, 2), pressure, multiplier)."""
        u = np.column_stack([x[:self.n_nodes], x[self.n_nodes:self.n_velocity]])
        return u, x[self.n_velocity:self.n_velocity + self.n_pressure], x[-1]

    def join(self, u, p=None, lam=0.0):
        x = np.zeros(self.n_dofs)
        x[:self.n_nodes] = u[:, 0]
        x[self.n_nodes:self.n_velocity] = u[:, 1]
        if p is not None:
            x[self.n_velocity:self.n_velocity + self.n_pressure] = p
        x[-1] = lam
        return x

    def evaluate_velocity(self, u, points):
        """Point evaluation of a P2 field (value and gradient)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        owner, bary = self.mesh.locate(pts)
        if np.any(owner < 0):
            raise ValueError("some evaluation points lie outside the mesh")
        N, dN_ref = p2_basis(bary[:, 1:])
        U = u[self.cell_nodes[owner]]
        val = np.einsum("na,nai->ni", N, U)
        dN = np.einsum("nar,nrj->naj", dN_ref, self._invJ[owner])
        grad = np.einsum("naj,nai->nij", dN, U)
        return val, grad
