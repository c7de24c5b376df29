"""Discrete actions of the continuous operators: Laplacian, angular momentum,
single-particle Hamiltonians, energy, gradient, Hessian, and residual.

Everything is strong-form collocation: operators act pointwise on node
values, quadrature weights live only in the inner products.  All operators
here are real-linear; the Hessian is the one member that is *not*
complex-linear (it carries a conjugation term), which is why fields are
treated as a real Hilbert space throughout.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import stencils
from .errors import ConfigurationError, GridMismatchError
from .grids import Field, PolarGrid, inner_l2, norm_l2

NONLINEARITY_KINDS = ("cubic", "log", "lhy")  # only "cubic" is implemented
POTENTIAL_KINDS = ("harmonic", "custom")


@dataclass(frozen=True)
class ProblemParams:
    """Rotation frequency, cubic coupling f(s) = eta*s, and trap potential."""

    omega: float = 0.0
    eta: float = 0.0
    potential: str = "harmonic"
    custom_potential: np.ndarray | None = None  # radial samples on r_nodes
    nonlinearity: str = "cubic"

    def __post_init__(self):
        if not np.isfinite(self.omega) or not np.isfinite(self.eta):
            raise ConfigurationError("omega and eta must be finite")
        if self.omega < 0:
            raise ConfigurationError(f"omega must be >= 0, got {self.omega}")
        if self.eta < 0:
            raise ConfigurationError(f"eta must be >= 0, got {self.eta}")
        if self.potential not in POTENTIAL_KINDS:
            raise ConfigurationError(f"unknown potential kind {self.potential!r}")
        if self.potential == "custom" and self.custom_potential is None:
            raise ConfigurationError("potential='custom' requires custom_potential samples")
        if self.nonlinearity not in NONLINEARITY_KINDS:
            raise ConfigurationError(f"unknown nonlinearity {self.nonlinearity!r}")
        if self.potential == "harmonic" and abs(self.omega) > 1.0:
            warnings.warn(
                f"|omega| = {abs(self.omega)} > 1 with a harmonic trap: the "
                "energy is unbounded below and no minimizer exists",
                stacklevel=2)


class OperatorSet:
    """Grid + problem parameters with precomputed stencil coefficients.

    Immutable after construction (the modal-solver cache is append-only);
    every ``apply_*`` function is pure.
    """

    def __init__(self, grid: PolarGrid, params: ProblemParams):
        if params.nonlinearity != "cubic":
            raise NotImplementedError(
                f"nonlinearity {params.nonlinearity!r} is a reserved slot; "
                "only 'cubic' is implemented")
        self.grid = grid
        self.params = params
        if params.potential == "harmonic":
            v_r = 0.5 * grid.r_nodes**2
        else:
            v_r = np.asarray(params.custom_potential, dtype=float)
            if v_r.shape != (grid.n_r,):
                raise ConfigurationError(
                    f"custom_potential must have shape ({grid.n_r},), got {v_r.shape}")
        self.potential = v_r.reshape(-1, 1).copy()
        self.potential.setflags(write=False)
        self._a_plus, self._a_minus = stencils.radial_flux_coeffs(grid.n_r, grid.h_r)
        self._inv_r2 = (1.0 / grid.r_nodes**2).reshape(-1, 1)
        self._modal_cache: dict = {}

    # raw-array kernels (used by the preconditioner module as well)

    def lap_raw(self, v: np.ndarray) -> np.ndarray:
        return stencils.laplacian(v, self._a_plus, self._a_minus,
                                  self._inv_r2, self.grid.h_theta)

    def lz_raw(self, v: np.ndarray) -> np.ndarray:
        return -1j * stencils.dtheta(v, self.grid.h_theta)

    def h0_raw(self, v: np.ndarray) -> np.ndarray:
        out = -0.5 * self.lap_raw(v)
        out += self.potential * v
        if self.params.omega != 0.0:
            out += 1j * self.params.omega * stencils.dtheta(v, self.grid.h_theta)
        return out


def build_operators(grid: PolarGrid, params: ProblemParams) -> OperatorSet:
    return OperatorSet(grid, params)


def _check_on_grid(ops: OperatorSet, u: Field) -> None:
    if u.grid is not ops.grid and not u.grid.compatible(ops.grid):
        raise GridMismatchError("field does not live on the operator grid")


def apply_laplacian(ops: OperatorSet, u: Field) -> Field:
    _check_on_grid(ops, u)
    return Field(ops.grid, ops.lap_raw(u.values))


def apply_lz(ops: OperatorSet, u: Field) -> Field:
    """Angular momentum -i d/dTheta (8th-order periodic stencil)."""
    _check_on_grid(ops, u)
    return Field(ops.grid, ops.lz_raw(u.values))


def apply_h0(ops: OperatorSet, u: Field) -> Field:
    """Linear Hamiltonian -1/2 Lap + V - Omega Lz."""
    _check_on_grid(ops, u)
    return Field(ops.grid, ops.h0_raw(u.values))


def apply_h_phi(ops: OperatorSet, state: Field, u: Field) -> Field:
    """Mean-field Hamiltonian at `state`: H0 u + eta |state|^2 u."""
    _check_on_grid(ops, u)
    _check_on_grid(ops, state)
    out = ops.h0_raw(u.values)
    if ops.params.eta != 0.0:
        s = state.values
        out += (ops.params.eta * (s.real**2 + s.imag**2)) * u.values
    return Field(ops.grid, out)


def energy(ops: OperatorSet, state: Field) -> float:
    """Total energy 1/2 [ <H0 phi, phi> + sum w F(rho) ] with F(s) = eta s^2/2.

    The kinetic term is evaluated in its positive form -- radial flux
    sum-of-squares (the exact summation-by-parts identity of the flux-form
    Laplacian) plus the angular Parseval sum -- rather than through the
    stencil.  The stencil form subtracts O(|phi|/h^2) intermediates and
    leaves ~eps/h^2 absolute noise in the energy, which is enough to defeat
    line searches near convergence; the positive form has only relative
    rounding.  Both forms agree identically in exact arithmetic.
    """
    _check_on_grid(ops, state)
    g = ops.grid
    v = state.values
    rho = v.real**2 + v.imag**2

    # radial kinetic: sum over faces c_{i+1}/h^2 |u_{i+1} - u_i|^2 * w-cell,
    # with the zero Dirichlet ghost as the last difference
    diff = np.empty_like(v)
    diff[:-1] = v[1:] - v[:-1]
    diff[-1] = -v[-1]
    face_r = np.arange(1, g.n_r + 1) * g.h_r
    radial = float(np.sum(face_r[:, None] * (diff.real**2 + diff.imag**2))
                   * (g.h_theta / g.h_r))

    # angular kinetic and rotation via the Fourier symbols (Parseval per row)
    vhat = np.fft.fft(v, axis=1)
    power = vhat.real**2 + vhat.imag**2
    s2 = stencils.d2_symbol(g.n_theta, g.h_theta)
    row_ang = (g.h_r * g.h_theta / g.r_nodes)   # w_i / r_i^2
    angular = float(np.sum(row_ang[:, None] * (-s2)[None, :] * power)) / g.n_theta
    kinetic = 0.5 * (radial + angular)

    potential = float(np.sum(ops.grid.weights * ops.potential * rho))

    rotation = 0.0
    if ops.params.omega != 0.0:
        om = stencils.d1_symbol(g.n_theta, g.h_theta)
        row_w = g.r_nodes * g.h_r * g.h_theta
        lz_quad = float(np.sum(row_w[:, None] * om[None, :] * power)) / g.n_theta
        rotation = -ops.params.omega * lz_quad

    nonlin = 0.5 * ops.params.eta * float(np.sum(ops.grid.weights * rho * rho))
    return 0.5 * (kinetic + potential + rotation + nonlin)


def euclidean_gradient(ops: OperatorSet, state: Field) -> Field:
    """First variation of the energy: H_phi(state) applied to state."""
    return apply_h_phi(ops, state, state)


def apply_hessian(ops: OperatorSet, state: Field, u: Field) -> Field:
    """Second variation: H_phi u + 2 eta state Re(conj(state) u).

    The second term is real-linear but not complex-linear in u; it is the
    conjugation kernel eta (|state|^2 + state^2 conj(.)) written pointwise.
    """
    _check_on_grid(ops, u)
    _check_on_grid(ops, state)
    out = ops.h0_raw(u.values)
    if ops.params.eta != 0.0:
        s = state.values
        rho = s.real**2 + s.imag**2
        re_part = s.real * u.values.real + s.imag * u.values.imag
        out += (ops.params.eta * rho) * u.values
        out += (2.0 * ops.params.eta) * re_part * s
    return Field(ops.grid, out)


def lambda_tilde(ops: OperatorSet, state: Field) -> float:
    """Rayleigh quotient <H_phi phi, phi>, the chemical potential at `state`."""
    n = norm_l2(state)
    if abs(n - 1.0) > 1e-10:
        warnings.warn(f"lambda_tilde on a non-normalized state (|phi| = {n})",
                      stacklevel=2)
    return inner_l2(apply_h_phi(ops, state, state), state)


def residual_inf(ops: OperatorSet, state: Field) -> float:
    """Stopping functional: max-norm of H_phi phi - lambda_tilde(phi) phi."""
    h = apply_h_phi(ops, state, state)
    lam = inner_l2(h, state)
    return float(np.max(np.abs(h.values - lam * state.values)))
