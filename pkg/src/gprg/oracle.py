"""Independent brute-force verification tools: finite-difference derivatives
of the energy and dense-matrix assembly of every operator on tiny grids.

Complex fields map to stacked real vectors x = (Re u, Im u); conjugation and
multiplication by i become explicit 2x2 blocks, which makes the real-linear
(not complex-linear) structure of the Hessian matrix-explicit.  Quadrature
weights enter as the diagonal mass matrix, so symmetric bilinear forms are
W @ action.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import ConfigurationError
from .grids import Field, PolarGrid
from .operators import (OperatorSet, apply_h0, apply_h_phi, apply_hessian,
                        energy)
from .precond import PreconditionerHandle, PreconditionerSpec, assemble

_MAX_DENSE_NODES = 4096


def field_to_vec(u: Field) -> np.ndarray:
    return np.concatenate((u.values.real.ravel(), u.values.imag.ravel()))


def vec_to_field(grid: PolarGrid, x: np.ndarray) -> Field:
    n = grid.size
    return Field(grid, (x[:n] + 1j * x[n:]).reshape(grid.n_r, grid.n_theta))


def fd_directional(ops: OperatorSet, state: Field, v: Field, h: float,
                   order: str = "first") -> float:
    """Central finite differences of the energy along v.

    first : (E(phi + h v) - E(phi - h v)) / (2h)
    second: (E(phi + h v) - 2 E(phi) + E(phi - h v)) / h^2
    """
    if h <= 0:
        raise ValueError("h must be positive")
    plus = energy(ops, Field(ops.grid, state.values + h * v.values))
    minus = energy(ops, Field(ops.grid, state.values - h * v.values))
    if order == "first":
        return (plus - minus) / (2.0 * h)
    if order == "second":
        return (plus - 2.0 * energy(ops, state) + minus) / (h * h)
    raise ValueError(f"unknown order {order!r}")


@dataclass
class DenseSystem:
    """Dense real matrices mirroring every stencil path on a small grid."""

    grid: PolarGrid
    weights: np.ndarray        # (2N,) duplicated quadrature weights
    h0_action: np.ndarray      # (2N, 2N)
    hphi_action: np.ndarray
    hess_action: np.ndarray
    prec_action: np.ndarray | None = None

    @property
    def n(self) -> int:
        return 2 * self.grid.size

    @property
    def mass(self) -> np.ndarray:
        return np.diag(self.weights)

    def form(self, which: str) -> np.ndarray:
        """Symmetric bilinear-form matrix W @ action for 'h0'|'hphi'|'hess'|'prec'."""
        action = {"h0": self.h0_action, "hphi": self.hphi_action,
                  "hess": self.hess_action, "prec": self.prec_action}[which]
        if action is None:
            raise ValueError("no preconditioner was assembled")
        return self.weights[:, None] * action

    def solve_prec(self, w: Field) -> Field:
        if self.prec_action is None:
            raise ValueError("no preconditioner was assembled")
        x = np.linalg.solve(self.prec_action, field_to_vec(w))
        return vec_to_field(self.grid, x)

    def tangent_basis(self, deflate_vecs) -> np.ndarray:
        """W-orthonormal basis of the W-orthogonal complement of the span of
        `deflate_vecs` (the deflated subspace, in plain coordinates)."""
        w = self.weights
        c = np.column_stack([field_to_vec(v) for v in deflate_vecs])
        q, _ = np.linalg.qr(np.sqrt(w)[:, None] * c)
        z_hat = scipy.linalg.null_space(q.T)
        return z_hat / np.sqrt(w)[:, None]

    def eig_tangent(self, state: Field, k: int):
        """Generalized symmetric eigensolve of (Hessian form, mass) deflated
        to the tangent space of `state`; the truth source for the sparse path."""
        basis = self.tangent_basis([state])
        a = basis.T @ self.form("hess") @ basis
        m = basis.T @ self.mass @ basis
        a = 0.5 * (a + a.T)
        m = 0.5 * (m + m.T)
        vals, vecs = scipy.linalg.eigh(a, m)
        out = []
        for j in range(k):
            out.append((float(vals[j]),
                        vec_to_field(self.grid, basis @ vecs[:, j])))
        return out

    def pencil_extremes(self, state: Field, lam_g: float, deflate):
        """Extremes of (hess - lam_g mass, prec form) on the deflated subspace."""
        basis = self.tangent_basis(deflate)
        a = basis.T @ (self.form("hess") - lam_g * self.mass) @ basis
        b = basis.T @ self.form("prec") @ basis
        vals = scipy.linalg.eigh(0.5 * (a + a.T), 0.5 * (b + b.T),
                                 eigvals_only=True)
        return float(vals[0]), float(vals[-1])


def assemble_dense(ops: OperatorSet, state: Field,
                   spec: PreconditionerSpec | None = None) -> DenseSystem:
    """Materialize the stencil operators as dense matrices (small grids only)."""
    grid = ops.grid
    if grid.size > _MAX_DENSE_NODES:
        raise ConfigurationError(
            f"dense assembly limited to {_MAX_DENSE_NODES} nodes, "
            f"grid has {grid.size}")
    n = 2 * grid.size
    handle: PreconditionerHandle | None = None
    if spec is not None:
        handle = assemble(spec, ops, state)
    h0 = np.empty((n, n))
    hphi = np.empty((n, n))
    hess = np.empty((n, n))
    prec = np.empty((n, n)) if handle is not None else None
    basis_vec = np.zeros(n)
    for j in range(n):
        basis_vec[j] = 1.0
        e = vec_to_field(grid, basis_vec)
        h0[:, j] = field_to_vec(apply_h0(ops, e))
        hphi[:, j] = field_to_vec(apply_h_phi(ops, state, e))
        hess[:, j] = field_to_vec(apply_hessian(ops, state, e))
        if handle is not None:
            prec[:, j] = field_to_vec(handle.forward(e))
        basis_vec[j] = 0.0
    w2 = np.concatenate((grid.weights.ravel(), grid.weights.ravel()))
    return DenseSystem(grid=grid, weights=w2, h0_action=h0,
                       hphi_action=hphi, hess_action=hess, prec_action=prec)
