"""Residual and Jacobian of the floored power-law Navier-Stokes system.

The unknown is ``u`` with ``v = u + a``; the momentum residual tested with
``phi`` is

    int S_T(D(v)) : D(phi) + b(v; v, phi) - P div(phi) - f . phi

with ``S_T(D) = (1/T + |D|^(p-2)) D`` and the skew-symmetric convection
``b(w; v, phi) = 1/2 [(w . grad v, phi) - (w . grad phi, v)]``.  Continuity
rows are ``-int q div(u)``; one multiplier pins the pressure mean.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..errors import BadExponent, DimensionMismatch


@dataclass(frozen=True)
class PowerLaw:
    """Exponent ``p >= 2`` with viscosity floor ``1/T`` (``T = inf``: none)."""

    p: float
    T: float = math.inf

    def __post_init__(self):
        if not self.p >= 2:
            raise BadExponent(f"p must be >= 2, got {self.p}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")

    @property
    def conjugate(self):
        return self.p / (self.p - 1)

    @property
    def floor(self):
        return 0.0 if math.isinf(self.T) else 1.0 / self.T

    def viscosity(self, dnorm):
        return self.floor + _pow(dnorm, self.p - 2)

    def dviscosity_coeff(self, dnorm):
        """``(p - 2) |D|^(p-4)`` with the removable singularity at 0 set to 0."""
        if self.p == 2:
            return np.zeros_like(dnorm)
        out = np.zeros_like(dnorm)
        nz = dnorm > 0
        out[nz] = (self.p - 2) * dnorm[nz] ** (self.p - 4)
        return out


def _pow(x, e):
    if e == 0:
        return np.ones_like(x)
    return np.power(x, e)


def strain_rate(grad):
    """Symmetric part of a velocity gradient ``G[..., i, j] = d v_i / d x_j``."""
    grad = np.asarray(grad, dtype=float)
    return 0.5 * (grad + np.swapaxes(grad, -1, -2))


def frobenius(A):
    return np.sqrt(np.sum(A * A, axis=(-1, -2)))


def stress(D, law):
    D = np.asarray(D, dtype=float)
    return law.viscosity(frobenius(D))[..., None, None] * D


class FlowProblem:
    """Discrete truncated problem on a Taylor-Hood space.

    Carrier values and the optional body force are sampled once at the
    quadrature points.  ``body_force`` maps points ``(n, 2)`` to ``(n, 2)``;
    ``body_stress`` maps points to tensors ``(n, 2, 2)`` and enters in
    divergence form, i.e. as the load ``-div G`` tested weakly.
    """

    def __init__(self, space, carrier, law, body_force=None, convection=True,
                 body_stress=None):
        self.space = space
        self.carrier = carrier
        self.law = law
        self.convection = convection
        X = space.points.reshape(-1, 2)
        nel, nq = space.weights.shape
        if carrier is None or carrier.alpha == 0:
            self.a = np.zeros((nel, nq, 2))
            self.grad_a = np.zeros((nel, nq, 2, 2))
        else:
            a, ga = carrier.evaluate(X)
            self.a = a.reshape(nel, nq, 2)
            self.grad_a = ga.reshape(nel, nq, 2, 2)
        self.f = None
        if body_force is not None:
            self.f = np.asarray(body_force(X), dtype=float).reshape(nel, nq, 2)
        self.g = None
        if body_stress is not None:
            self.g = np.asarray(body_stress(X), dtype=float).reshape(nel, nq, 2, 2)
        self._build_static()

    # -- static pieces ------------------------------------------------------
    def _build_static(self):
        s = self.space
        w = s.weights
        # B[e, k, i, a] = -int M_k dN_a/dx_i
        self._B = -np.einsum("eq,qk,eqai->ekia", w, s.M, s.dN).reshape(len(w), 3, 12)
        self._pmean = np.zeros(s.n_pressure)
        np.add.at(self._pmean, s.mesh.triangles, np.einsum("eq,qk->ek", w, s.M))
        vd = s.cell_velocity_dofs
        pd = s.cell_pressure_dofs
        n = s.n_dofs
        lam = n - 1
        rows = [np.repeat(vd, 12, axis=1).ravel(), np.repeat(pd, 12, axis=1).ravel(),
                np.repeat(vd, 3, axis=1).ravel(),
                np.arange(s.n_velocity, s.n_velocity + s.n_pressure), np.full(s.n_pressure, lam)]
        cols = [np.tile(vd, (1, 12)).ravel(), np.tile(vd, (1, 3)).ravel(),
                np.tile(pd, (1, 12)).ravel(),
                np.full(s.n_pressure, lam), np.arange(s.n_velocity, s.n_velocity + s.n_pressure)]
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        keys = rows.astype(np.int64) * n + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        self._inv = inv
        self._csr_indices = (uniq % n).astype(np.int32)
        r = uniq // n
        self._csr_indptr = np.searchsorted(r, np.arange(n + 1)).astype(np.int32)
        self._nnz = len(uniq)
        self._n_vv = vd.shape[0] * 144

    def _to_csr(self, Kvv):
        B = self._B
        Bt = np.swapaxes(B, 1, 2)
        data = np.concatenate([Kvv.ravel(), B.ravel(), Bt.ravel(), self._pmean, self._pmean])
        vals = np.bincount(self._inv, weights=data, minlength=self._nnz)
        n = self.space.n_dofs
        return sp.csr_matrix((vals, self._csr_indices, self._csr_indptr), shape=(n, n))

    # -- state at quadrature points -------------------------------------
    def _check(self, x):
        if x.shape != (self.space.n_dofs,):
            raise DimensionMismatch(f"state has {x.shape} entries, expected {self.space.n_dofs}")

    def fields(self, x):
        s = self.space
        u, P, lam = s.split(x)
        uq, Gu = s.velocity_at_qp(u)
        v = uq + self.a
        Gv = Gu + self.grad_a
        return u, P, lam, uq, Gu, v, Gv

    def residual(self, x):
        self._check(x)
        s = self.space
        w = s.weights
        u, P, lam, uq, Gu, v, Gv = self.fields(x)
        D = strain_rate(Gv)
        S = stress(D, self.law)
        Rv = np.einsum("eq,eqij,eqaj->eia", w, S, s.dN)
        if self.convection:
            conv = np.einsum("eqij,eqj->eqi", Gv, v)
            vgN = np.einsum("eqj,eqaj->eqa", v, s.dN)
            Rv += 0.5 * (np.einsum("eq,qa,eqi->eia", w, s.N, conv)
                         - np.einsum("eq,eqi,eqa->eia", w, v, vgN))
        Pq = s.pressure_at_qp(P)
        Rv -= np.einsum("eq,eqai->eia", w * Pq, s.dN)
        if self.f is not None:
            Rv -= np.einsum("eq,qa,eqi->eia", w, s.N, self.f)
        if self.g is not None:
            Rv -= np.einsum("eq,eqij,eqaj->eia", w, self.g, s.dN)
        divu = Gu[..., 0, 0] + Gu[..., 1, 1]
        Rp = -np.einsum("eq,qk->ek", w * divu, s.M)
        R = np.zeros(s.n_dofs)
        np.add.at(R, s.cell_velocity_dofs, Rv.reshape(len(w), 12))
        np.add.at(R, s.cell_pressure_dofs, Rp)
        R[s.n_velocity:s.n_velocity + s.n_pressure] += lam * self._pmean
        R[-1] = self._pmean @ P
        return R

    def _viscous_block(self, Gv, newton):
        s = self.space
        w = s.weights
        D = strain_rate(Gv)
        dn = frobenius(D)
        wm = w * self.law.viscosity(dn)
        G0 = np.einsum("eq,eqaj,eqbj->eab", wm, s.dN, s.dN)
        K = 0.5 * np.einsum("eq,eqak,eqbi->eikab", wm, s.dN, s.dN)
        K[:, 0, 0] += 0.5 * G0
        K[:, 1, 1] += 0.5 * G0
        if newton and self.law.p != 2:
            wc = w * self.law.dviscosity_coeff(dn)
            DdN = np.einsum("eqij,eqaj->eqai", D, s.dN)
            K += np.einsum("eq,eqai,eqbk->eikab", wc, DdN, DdN)
        return K

    def _convection_block(self, v, Gv, newton):
        s = self.space
        w = s.weights
        vgN = np.einsum("eqj,eqaj->eqa", v, s.dN)
        skew = 0.5 * (np.einsum("eq,qa,eqb->eab", w, s.N, vgN)
                      - np.einsum("eq,qb,eqa->eab", w, s.N, vgN))
        K = np.zeros((len(w), 2, 2, 6, 6))
        K[:, 0, 0] += skew
        K[:, 1, 1] += skew
        if newton:
            K += 0.5 * np.einsum("eq,qa,eqik,qb->eikab", w, s.N, Gv, s.N)
            K -= 0.5 * np.einsum("eq,eqi,qb,eqak->eikab", w, v, s.N, s.dN)
        return K

    def matrix(self, x, newton=True):
        """Newton Jacobian (``newton=True``) or the frozen-coefficient Picard
        operator at state ``x``."""
        self._check(x)
        _, _, _, _, _, v, Gv = self.fields(x)
        K = self._viscous_block(Gv, newton)
        if self.convection:
            K += self._convection_block(v, Gv, newton)
        Kvv = K.transpose(0, 1, 3, 2, 4).reshape(len(K), 12, 12)
        return self._to_csr(Kvv)

    def jacobian(self, x):
        return self.matrix(x, newton=True)

    def picard_matrix(self, x):
        return self.matrix(x, newton=False)


def as_space(mesh_or_space):
    """Accept either a Mesh or an existing Taylor-Hood space."""
    from .space import TaylorHoodSpace
    if isinstance(mesh_or_space, TaylorHoodSpace):
        return mesh_or_space
    state_space = getattr(mesh_or_space, "space", None)
    if state_space is not None:
        return state_space
    return TaylorHoodSpace(mesh_or_space)


def _state_vector(space, state):
    x = getattr(state, "x", state)
    return np.asarray(x, dtype=float)


def assemble_residual(space, carrier, state, law, body_force=None, convection=True):
    """Residual at ``state`` (a Solution or a full coefficient vector)."""
    space = as_space(space)
    return FlowProblem(space, carrier, law, body_force, convection).residual(
        _state_vector(space, state))


def assemble_jacobian(space, carrier, state, law, body_force=None, convection=True):
    space = as_space(space)
    return FlowProblem(space, carrier, law, body_force, convection).jacobian(
        _state_vector(space, state))


def stokes_matrix(space):
    """Velocity block of ``int D(u) : D(v)`` (viscosity one)."""
    prob = FlowProblem(space, None, PowerLaw(2.0), convection=False)
    K = prob._viscous_block(np.zeros(space.weights.shape + (2, 2)), newton=False)
    Kvv = K.transpose(0, 1, 3, 2, 4).reshape(len(K), 12, 12)
    vd = space.cell_velocity_dofs
    rows = np.repeat(vd, 12, axis=1).ravel()
    cols = np.tile(vd, (1, 12)).ravel()
    n = space.n_velocity
    return sp.csr_matrix((Kvv.ravel(), (rows, cols)), shape=(n, n))


def gradient_matrix(space):
    """Velocity block of ``int grad u : grad v``."""
    w = space.weights
    G0 = np.einsum("eq,eqaj,eqbj->eab", w, space.dN, space.dN)
    K = np.zeros((len(w), 2, 2, 6, 6))
    K[:, 0, 0] = G0
    K[:, 1, 1] = G0
    Kvv = K.transpose(0, 1, 3, 2, 4).reshape(len(K), 12, 12)
    vd = space.cell_velocity_dofs
    n = space.n_velocity
    return sp.csr_matrix((Kvv.ravel(), (np.repeat(vd, 12, axis=1).ravel(),
                                        np.tile(vd, (1, 12)).ravel())), shape=(n, n))


def scalar_matrices(space):
    """P2 scalar stiffness and mass matrices."""
    w = space.weights
    K = np.einsum("eq,eqaj,eqbj->eab", w, space.dN, space.dN)
    M = np.einsum("eq,qa,qb->eab", w, space.N, space.N)
    cn = space.cell_nodes
    rows = np.repeat(cn, 6, axis=1).ravel()
    cols = np.tile(cn, (1, 6)).ravel()
    n = space.n_nodes
    return (sp.csr_matrix((K.ravel(), (rows, cols)), shape=(n, n)),
            sp.csr_matrix((M.ravel(), (rows, cols)), shape=(n, n)))


def divergence_matrix(space):
    """``B[k, j] = -int q_k div(phi_j)`` (P1 rows, velocity columns)."""
    w = space.weights
    B = -np.einsum("eq,qk,eqai->ekia", w, space.M, space.dN).reshape(len(w), 3, 12)
    pd = space.mesh.triangles
    vd = space.cell_velocity_dofs
    return sp.csr_matrix((B.ravel(), (np.repeat(pd, 12, axis=1).ravel(),
                                      np.tile(vd, (1, 3)).ravel())),
                         shape=(space.n_pressure, space.n_velocity))


def pressure_mass(space):
    w = space.weights
    M = np.einsum("eq,qa,qb->eab", w, space.M, space.M)
    t = space.mesh.triangles
    n = space.n_pressure
    return sp.csr_matrix((M.ravel(), (np.repeat(t, 3, axis=1).ravel(), np.tile(t, (1, 3)).ravel())),
                         shape=(n, n))


def export_matrix_market(A, path, comment=""):
    from scipy.io import mmwrite
    mmwrite(str(path), sp.coo_matrix(A), comment=comment)
