"""Riemannian machinery on the unit L2 sphere of fields: metric-orthogonal
tangent projection, the preconditioned Riemannian gradient with its
multiplier, the normalized retraction, and step-size selection.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, LineSearchError, NotCoerciveError
from .grids import Field, inner_l2, norm_l2
from .operators import OperatorSet, energy, euclidean_gradient
from .precond import PreconditionerHandle

_DEGENERATE_DENOM = 1e-14


@dataclass(frozen=True)
class StepPolicy:
    """How to pick the step length along the (negated) gradient direction."""

    mode: str = "backtracking"   # "fixed" | "backtracking" | "exact_1d"
    tau: float = 1.0             # fixed step, or initial trial for backtracking
    shrink: float = 0.5
    armijo_c: float = 1e-4
    max_halvings: int = 40
    bracket_growth: float = 2.0
    tol_1d: float = 1e-10

    def __post_init__(self):
        if self.mode not in ("fixed", "backtracking", "exact_1d"):
            raise ConfigurationError(f"unknown step mode {self.mode!r}")
        if not self.tau > 0:
            raise ConfigurationError(f"step tau must be positive, got {self.tau}")
        if not 0 < self.shrink < 1:
            raise ConfigurationError(f"shrink must lie in (0,1), got {self.shrink}")
        if not 0 < self.armijo_c < 1:
            raise ConfigurationError(f"armijo_c must lie in (0,1), got {self.armijo_c}")
        if self.max_halvings < 1 or not self.bracket_growth > 1:
            raise ConfigurationError("max_halvings >= 1 and bracket_growth > 1 required")

    @classmethod
    def fixed(cls, tau: float) -> "StepPolicy":
        return cls(mode="fixed", tau=tau)

    @classmethod
    def backtracking(cls, tau_init: float = 1.0, shrink: float = 0.5,
                     armijo_c: float = 1e-4, max_halvings: int = 40) -> "StepPolicy":
        return cls(mode="backtracking", tau=tau_init, shrink=shrink,
                   armijo_c=armijo_c, max_halvings=max_halvings)

    @classmethod
    def exact_1d(cls, tau_init: float = 1.0, growth: float = 2.0,
                 tol: float = 1e-10) -> "StepPolicy":
        return cls(mode="exact_1d", tau=tau_init, bracket_growth=growth, tol_1d=tol)


def project_tangent(state: Field, v: Field,
                    handle: PreconditionerHandle) -> Field:
    """Metric-orthogonal projection of v onto the tangent space at `state`:

        v - [(phi, v) / (phi, P^{-1} phi)] P^{-1} phi.

    The result is L2-orthogonal to `state`.
    """
    pinv_phi = handle.apply_inverse(state)
    denom = inner_l2(state, pinv_phi)
    if abs(denom) < _DEGENERATE_DENOM:
        raise NotCoerciveError(
            f"degenerate projection denominator (phi, P^-1 phi) = {denom:.3e}")
    coef = inner_l2(state, v) / denom
    return Field(state.grid, v.values - coef * pinv_phi.values)


def riemannian_gradient(ops: OperatorSet, state: Field,
                        handle: PreconditionerHandle,
                        warm: tuple | None = None) -> tuple[Field, float]:
    """Preconditioned Riemannian gradient and its multiplier:

        grad = P^{-1} H_phi phi - lambda_phi P^{-1} phi,
        lambda_phi = (phi, P^{-1} H_phi phi) / (phi, P^{-1} phi).
    """
    direction, lam, _ = gradient_with_solves(ops, state, handle, warm)
    return direction, lam


def gradient_with_solves(ops: OperatorSet, state: Field,
                         handle: PreconditionerHandle,
                         warm: tuple | None = None):
    """As `riemannian_gradient`, additionally returning the two inverse-solve
    results (P^{-1} H_phi phi, P^{-1} phi) so an outer iteration can
    warm-start the next Krylov solves with them.

    When the handle *is* the mean-field operator frozen at `state` (P3 with
    no shift), P^{-1} H_phi phi equals phi identically and that solve is
    skipped.
    """
    w_a, w_b = warm if warm is not None else (None, None)
    if handle.kind == "P3" and handle.spec.shift_a == 0.0 and handle.frozen_at(state):
        a = state
    else:
        g = euclidean_gradient(ops, state)
        a = handle.apply_inverse(g, x0=w_a)
    b = handle.apply_inverse(state, x0=w_b)
    denom = inner_l2(state, b)
    if abs(denom) < _DEGENERATE_DENOM:
        raise NotCoerciveError(
            f"degenerate multiplier denominator (phi, P^-1 phi) = {denom:.3e}")
    lam = inner_l2(state, a) / denom
    direction = Field(ops.grid, a.values - lam * b.values)
    return direction, lam, (a, b)


def retract(state: Field, v: Field, tau: float) -> Field:
    """Normalized retraction (phi + tau v) / ||phi + tau v||_L2."""
    if tau == 0.0:
        return state
    trial = state.values + tau * v.values
    nrm = float(np.sqrt(np.sum(state.grid.weights
                               * (trial.real**2 + trial.imag**2))))
    assert nrm > 1e-14, "retraction hit a zero-norm update; tangency violated"
    return Field(state.grid, trial / nrm)


def select_step(ops: OperatorSet, state: Field, direction: Field,
                policy: StepPolicy, dnorm2_p: float = 0.0,
                energy0: float | None = None) -> tuple[float, float]:
    """Choose tau for the update retract(state, -tau * direction).

    Returns (tau, trial_energy).  `dnorm2_p` is <P d, d> for the Armijo
    model; `energy0` avoids re-evaluating E(state) when the caller has it.
    """
    def trial_energy(tau: float) -> float:
        return energy(ops, retract(state, direction, -tau))

    if policy.mode == "fixed":
        return policy.tau, trial_energy(policy.tau)

    if energy0 is None:
        energy0 = energy(ops, state)

    # Energy values carry relative round-off ~eps*|E|; once the requested
    # Armijo margin falls below that, descent is no longer measurable and the
    # test would reject every step.  Accept within the noise band instead so
    # the iteration can keep polishing the residual.
    noise = 32.0 * np.finfo(float).eps * max(1.0, abs(energy0))

    if policy.mode == "backtracking":
        tau = policy.tau
        for _ in range(policy.max_halvings):
            e_try = trial_energy(tau)
            margin = policy.armijo_c * tau * dnorm2_p
            if e_try <= energy0 - margin or (margin <= noise
                                             and e_try <= energy0 + noise):
                return tau, e_try
            tau *= policy.shrink
        raise LineSearchError(
            f"no descent after {policy.max_halvings} halvings from tau = "
            f"{policy.tau} (E0 = {energy0:.12e}); the direction is not a "
            "descent direction or the inverse tolerance is too loose")

    # exact_1d: bracket the minimizer of tau -> E(retract(-tau d)), then
    # golden-section.  The scalar energy is cheap relative to the inverse
    # solves that produced the direction.
    lo, e_lo = 0.0, energy0
    tau, e_tau = policy.tau, trial_energy(policy.tau)
    while e_tau >= e_lo and tau > 1e-14:
        tau /= policy.bracket_growth
        e_tau = trial_energy(tau)
    if e_tau >= e_lo:
        if e_tau <= e_lo + noise:  # at the energy-resolution floor
            return tau, e_tau
        raise LineSearchError("bracketing found no descent at any step size")
    hi, e_hi = tau * policy.bracket_growth, trial_energy(tau * policy.bracket_growth)
    while e_hi < e_tau:
        lo, tau, e_tau = tau, hi, e_hi
        hi *= policy.bracket_growth
        e_hi = trial_energy(hi)
        if hi > 1e12:
            break
    # golden-section on [lo, hi] around the interior best point
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    e_c, e_d = trial_energy(c), trial_energy(d)
    while (b - a) > policy.tol_1d * max(1.0, b):
        if e_c < e_d:
            b, d, e_d = d, c, e_c
            c = b - invphi * (b - a)
            e_c = trial_energy(c)
        else:
            a, c, e_c = c, d, e_d
            d = a + invphi * (b - a)
            e_d = trial_energy(d)
    tau_best, e_best = (c, e_c) if e_c < e_d else (d, e_d)
    if e_best > energy0 + noise:
        raise LineSearchError("1-d search failed to descend")
    return tau_best, e_best
