"""The preconditioner family defining the Riemannian metric, with certified
forward and inverse application.

Four kinds are supported:

* ``P1``: -1/2 Lap + V (+ a)          -- trap operator, rotation-free
* ``P2``: H0 (+ a)                    -- full linear Hamiltonian
* ``P3``: H_phi (+ a)                 -- mean-field Hamiltonian at the state
* ``P4``: E''(phi) - (lambda~ - sigma0) I  -- shifted-Hessian optimal metric

P1/P2 have Theta-independent coefficients: the angular circulant part is
diagonalized by the FFT and each Fourier mode reduces to a real tridiagonal
radial system solved directly (machine-precision inverse).  P3/P4 carry
state-dependent coefficients and are inverted by preconditioned conjugate
gradients in the weighted L2 inner product, with the P2 direct solve as the
inner preconditioner.  Every inverse is tolerance-certified on its true
residual.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import stencils
from .errors import ConfigurationError, NotCoerciveError, SolveError
from .grids import Field, norm_l2
from .operators import OperatorSet, apply_h_phi, apply_hessian, lambda_tilde

PRECONDITIONER_KINDS = ("P1", "P2", "P3", "P4")


@dataclass(frozen=True)
class PreconditionerSpec:
    """Which metric operator to use and how accurately to invert it."""

    kind: str
    shift_a: float = 0.0
    sigma0: float = 1e-3
    inverse_tol: float = 1e-12
    inverse_max_iter: int = 10000

    def __post_init__(self):
        if self.kind not in PRECONDITIONER_KINDS:
            raise ConfigurationError(f"unknown preconditioner kind {self.kind!r}")
        if self.shift_a < 0 or not np.isfinite(self.shift_a):
            raise ConfigurationError(f"shift_a must be >= 0, got {self.shift_a}")
        if self.kind == "P4" and not self.sigma0 > 0:
            raise ConfigurationError(f"P4 requires sigma0 > 0, got {self.sigma0}")
        if not 0 < self.inverse_tol < 1:
            raise ConfigurationError(f"inverse_tol out of range: {self.inverse_tol}")
        if self.inverse_max_iter < 1:
            raise ConfigurationError("inverse_max_iter must be positive")


class _ModalDirectSolver:
    """Direct inverse for Theta-independent operators -1/2 Lap + V + shift (- Omega Lz).

    FFT over Theta decouples the angular circulants into their symbols; each
    mode leaves a real tridiagonal system over r, factored once (vectorized
    Thomas across all modes).
    """

    def __init__(self, ops: OperatorSet, include_rotation: bool, shift: float):
        grid = ops.grid
        n_r, n_theta = grid.n_r, grid.n_theta
        a_plus = ops._a_plus[:, 0]
        a_minus = ops._a_minus[:, 0]
        s2 = stencils.d2_symbol(n_theta, grid.h_theta)          # (n_theta,)
        diag = (0.5 * (a_plus + a_minus) + ops.potential[:, 0] + shift)[:, None] \
            - 0.5 * (1.0 / grid.r_nodes**2)[:, None] * s2[None, :]
        if include_rotation and ops.params.omega != 0.0:
            om = stencils.d1_symbol(n_theta, grid.h_theta)
            diag = diag - ops.params.omega * om[None, :]
        self._sup = -0.5 * a_plus                                # (n_r,)
        sub = -0.5 * a_minus                                     # sub[0] == 0: no pole coupling
        # Thomas factorization, vectorized over the mode axis
        denom = np.empty((n_r, n_theta))
        wfac = np.zeros((n_r, n_theta))
        denom[0] = diag[0]
        for i in range(1, n_r):
            wfac[i] = sub[i] / denom[i - 1]
            denom[i] = diag[i] - wfac[i] * self._sup[i - 1]
        if not np.all(denom > 0.0):
            raise NotCoerciveError(
                "direct preconditioner factorization hit a non-positive pivot; "
                "the operator is not coercive for these parameters")
        self._denom = denom
        self._wfac = wfac
        self._n_r = n_r

    def solve(self, values: np.ndarray) -> np.ndarray:
        b = np.fft.fft(values, axis=1)
        y = np.empty_like(b)
        y[0] = b[0]
        for i in range(1, self._n_r):
            y[i] = b[i] - self._wfac[i] * y[i - 1]
        x = np.empty_like(b)
        x[-1] = y[-1] / self._denom[-1]
        for i in range(self._n_r - 2, -1, -1):
            x[i] = (y[i] - self._sup[i] * x[i + 1]) / self._denom[i]
        return np.fft.ifft(x, axis=1)


def _modal_solver(ops: OperatorSet, include_rotation: bool, shift: float) -> _ModalDirectSolver:
    key = (include_rotation, shift)
    solver = ops._modal_cache.get(key)
    if solver is None:
        solver = _ModalDirectSolver(ops, include_rotation, shift)
        ops._modal_cache[key] = solver
    return solver


def _wdot(w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
    """Re sum w x conj(y) on raw arrays."""
    return float(np.real(np.vdot(y, w * x)))


def _pcg(apply_op, apply_prec, b: np.ndarray, weights: np.ndarray,
         tol: float, max_iter: int, x0: np.ndarray | None = None,
         context: str = "preconditioner"):
    """Preconditioned CG in the weighted real inner product.

    Returns (x, relative_residual, iterations).  Raises NotCoerciveError on
    a non-positive curvature direction and SolveError on exhaustion.
    """
    bnorm = np.sqrt(_wdot(weights, b, b))
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0
    if x0 is None:
        x = np.zeros_like(b)
        r = b.copy()
    else:
        x = x0.copy()
        r = b - apply_op(x)
    z = apply_prec(r)
    p = z.copy()
    rz = _wdot(weights, r, z)
    rnorm = np.sqrt(_wdot(weights, r, r))
    for it in range(1, max_iter + 1):
        if rnorm <= tol * bnorm:
            return x, rnorm / bnorm, it - 1
        ap = apply_op(p)
        pap = _wdot(weights, ap, p)
        if pap <= 0.0:
            raise NotCoerciveError(
                f"{context} not coercive at this state (curvature {pap:.3e}); "
                "increase sigma0 or supply a state closer to a minimizer")
        alpha = rz / pap
        x += alpha * p
        if it % 50 == 0:
            r = b - apply_op(x)
        else:
            r -= alpha * ap
        z = apply_prec(r)
        rz_new = _wdot(weights, r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new
        rnorm = np.sqrt(_wdot(weights, r, r))
    if rnorm <= tol * bnorm:
        return x, rnorm / bnorm, max_iter
    raise SolveError(
        f"{context} inverse did not converge in {max_iter} iterations "
        f"(residual {rnorm / bnorm:.3e}, target {tol:.1e})",
        achieved_residual=rnorm / bnorm)


class PreconditionerHandle:
    """Assembled metric operator P_phi with forward and certified inverse.

    Immutable; the state snapshot (P3/P4) is frozen at assembly.
    """

    def __init__(self, spec: PreconditionerSpec, ops: OperatorSet,
                 state: Field | None):
        self.spec = spec
        self.ops = ops
        self.kind = spec.kind
        self.state = None
        self._eta_rho = None
        self._lam_shift = 0.0
        if spec.kind in ("P1", "P2"):
            self._direct = _modal_solver(ops, spec.kind == "P2", spec.shift_a)
            self._inner = None
        else:
            if state is None:
                raise ConfigurationError(f"{spec.kind} requires a state snapshot")
            self.state = state.copy()
            s = self.state.values
            self._eta_rho = ops.params.eta * (s.real**2 + s.imag**2)
            if spec.kind == "P4":
                self._lam_shift = lambda_tilde(ops, self.state) - spec.sigma0
            self._direct = None
            self._inner = _modal_solver(ops, True, spec.shift_a)

    # -- forward action ------------------------------------------------

    def _forward_raw(self, v: np.ndarray) -> np.ndarray:
        ops, spec = self.ops, self.spec
        if spec.kind == "P1":
            out = -0.5 * ops.lap_raw(v) + ops.potential * v
        elif spec.kind == "P2":
            out = ops.h0_raw(v)
        elif spec.kind == "P3":
            out = ops.h0_raw(v) + self._eta_rho * v
        else:  # P4: Hessian minus (lambda~ - sigma0)
            out = ops.h0_raw(v) + self._eta_rho * v
            s = self.state.values
            re_part = s.real * v.real + s.imag * v.imag
            out += (2.0 * ops.params.eta) * re_part * s
            out -= self._lam_shift * v
        if spec.shift_a != 0.0:
            out += spec.shift_a * v
        return out

    def forward(self, u: Field) -> Field:
        """Apply P_phi."""
        return Field(self.ops.grid, self._forward_raw(u.values))

    # -- inverse action ------------------------------------------------

    def apply_inverse(self, w: Field, x0: Field | None = None) -> Field:
        """Solve P_phi v = w with ||P v - w||_L2 <= inverse_tol * ||w||_L2."""
        if self._direct is not None:
            return Field(self.ops.grid, self._direct.solve(w.values))
        x, _, _ = _pcg(self._forward_raw, self._inner.solve, w.values,
                       self.ops.grid.weights, self.spec.inverse_tol,
                       self.spec.inverse_max_iter,
                       None if x0 is None else x0.values,
                       context=f"{self.spec.kind} preconditioner")
        return Field(self.ops.grid, x)

    def frozen_at(self, state: Field) -> bool:
        """True when this handle's snapshot equals `state` exactly."""
        if self.state is None:
            return False
        return self.state.values is state.values \
            or np.array_equal(self.state.values, state.values)


def assemble(spec: PreconditionerSpec, ops: OperatorSet,
             state: Field | None = None) -> PreconditionerHandle:
    """Build a handle; P1/P2 reuse a cached modal factorization on `ops`."""
    return PreconditionerHandle(spec, ops, state)
