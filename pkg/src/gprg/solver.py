"""Outer preconditioned Riemannian gradient iteration with staged
preconditioner schedules, stopping rules, and full convergence history.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import DivergenceError
from .grids import Field, PolarGrid, inner_l2, norm_h1_discrete, norm_l2, normalized
from .operators import (OperatorSet, ProblemParams, apply_h_phi, energy,
                        residual_inf)
from .precond import PreconditionerHandle, PreconditionerSpec, assemble
from .riemannian import (StepPolicy, gradient_with_solves, retract,
                         select_step)

INITIAL_KINDS = ("gaussian", "gaussian_winding", "perturbed")


@dataclass(frozen=True)
class StageSpec:
    """One stage of the schedule: a metric, a step rule, and stop criteria."""

    precond: PreconditionerSpec
    policy: StepPolicy
    max_iters: int
    stop_residual: float | None = None
    stop_energy_delta: float | None = None
    stop_energy_value: float | None = None  # stop once E <= value (rate runs)

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.stop_residual is not None and not self.stop_residual > 0:
            raise ValueError("stop_residual must be positive when enabled")
        if self.stop_energy_delta is not None and not self.stop_energy_delta > 0:
            raise ValueError("stop_energy_delta must be positive when enabled")


@dataclass
class IterationRow:
    n: int
    energy: float
    lambda_tilde: float
    residual_inf: float
    step_tau: float
    direction_p_norm: float
    wall_seconds: float


@dataclass
class ConvergenceRecord:
    rows: list[IterationRow] = field(default_factory=list)
    status: str = "max_iters"   # residual_met | energy_delta_met | max_iters | error
    error: str | None = None


HISTORY_HEADER = "n,energy,lambda,residual_inf,tau,dnorm_P,wall_s"


def export_history(record: ConvergenceRecord, path) -> None:
    """History CSV, 17 significant digits per value."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(HISTORY_HEADER + "\n")
        for r in record.rows:
            fh.write(f"{r.n},{r.energy:.17g},{r.lambda_tilde:.17g},"
                     f"{r.residual_inf:.17g},{r.step_tau:.17g},"
                     f"{r.direction_p_norm:.17g},{r.wall_seconds:.17g}\n")


def initial_guess(kind: str, grid: PolarGrid, params: ProblemParams,
                  m: int = 0, seed: int = 0, amplitude: float = 0.1) -> Field:
    """Deterministic unit-norm starting fields.

    gaussian         : exp(-r^2/2)
    gaussian_winding : r^|m| exp(-r^2/2) e^{i m Theta}
    perturbed        : winding base (m, default 0) plus seeded complex noise
                       of relative size `amplitude`, renormalized
    """
    if kind not in INITIAL_KINDS:
        raise ValueError(f"unknown initial kind {kind!r}")
    r = grid.r_nodes[:, None]
    theta = grid.theta_nodes[None, :]
    profile = r**abs(m) * np.exp(-0.5 * r * r) if m != 0 else np.exp(-0.5 * r * r)
    base = profile * np.exp(1j * m * theta) if m != 0 else profile + 0j
    base = np.broadcast_to(base, (grid.n_r, grid.n_theta)).astype(np.complex128)
    out = normalized(Field(grid, base.copy()))
    if kind == "perturbed":
        rng = np.random.default_rng(seed)
        noise = rng.standard_normal((grid.n_r, grid.n_theta)) \
            + 1j * rng.standard_normal((grid.n_r, grid.n_theta))
        noise_f = normalized(Field(grid, noise))
        out = normalized(Field(grid, out.values + amplitude * noise_f.values))
    return out


def perturb_state(ops: OperatorSet, state: Field, seed: int,
                  h1_size: float = 2e-2) -> Field:
    """Displace a state by smooth seeded noise of prescribed discrete-H1 size.

    The raw noise is mollified by one linear-Hamiltonian inverse (a smoothing
    solve), which keeps the perturbation dominated by low modes; it is then
    scaled so ||delta||_H1 = h1_size and the sum is renormalized.
    """
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal(state.values.shape) \
        + 1j * rng.standard_normal(state.values.shape)
    smoother = assemble(PreconditionerSpec("P2"), ops)
    delta = smoother.apply_inverse(Field(ops.grid, raw))
    scale = h1_size / norm_h1_discrete(delta)
    return normalized(Field(ops.grid, state.values + scale * delta.values))


def step(ops: OperatorSet, state: Field, handle: PreconditionerHandle,
         policy: StepPolicy, energy0: float | None = None,
         warm: tuple | None = None):
    """One P-RG update: direction, step size, retraction.

    Returns (next_state, IterationRow (n left 0), warm solves for reuse).
    """
    t0 = time.perf_counter()
    direction, lam, solves = gradient_with_solves(ops, state, handle, warm=warm)
    dnorm2 = inner_l2(handle.forward(direction), direction)
    tau, e_trial = select_step(ops, state, direction, policy,
                               dnorm2_p=dnorm2, energy0=energy0)
    next_state = retract(state, direction, -tau)
    row = IterationRow(
        n=0, energy=e_trial, lambda_tilde=lam,
        residual_inf=residual_inf(ops, next_state),
        step_tau=tau, direction_p_norm=float(np.sqrt(max(dnorm2, 0.0))),
        wall_seconds=time.perf_counter() - t0)
    return next_state, row, solves


def run(stages, ops: OperatorSet, initial: Field, callback=None):
    """Execute the stage schedule; returns (final_state, records).

    Each stage iterates until its residual / energy-delta rule or iteration
    cap fires.  Per-stage records always start with a row describing the
    incoming state (n = 0, tau = 0).  State-dependent metrics (P3/P4) are
    re-assembled every iteration; the direct factorizations they share are
    cached on `ops`.  `callback(state, row)`, when given, sees every accepted
    iterate.  A stage error aborts the whole run with partial records kept.
    """
    if not stages:
        raise ValueError("at least one stage is required")
    state = initial
    records: list[ConvergenceRecord] = []
    for stage in stages:
        rec = ConvergenceRecord(rows=[], status="max_iters")
        records.append(rec)
        spec, policy = stage.precond, stage.policy
        state_dependent = spec.kind in ("P3", "P4")
        handle = None if state_dependent else assemble(spec, ops, state)
        e_cur = energy(ops, state)
        rec.rows.append(IterationRow(0, e_cur, _lambda_of(ops, state),
                                     residual_inf(ops, state), 0.0, 0.0, 0.0))
        if stage.stop_residual is not None \
                and rec.rows[0].residual_inf <= stage.stop_residual:
            rec.status = "residual_met"
            continue
        warm = None
        for n in range(1, stage.max_iters + 1):
            if state_dependent:
                handle = assemble(spec, ops, state)
            try:
                state, row, warm = step(ops, state, handle, policy,
                                        energy0=e_cur, warm=warm)
            except Exception as exc:  # keep partial records, then re-raise
                rec.status = "error"
                rec.error = f"{type(exc).__name__}: {exc}"
                raise
            row.n = n
            rec.rows.append(row)
            if callback is not None:
                callback(state, row)
            if row.energy > e_cur + 1e-10 * max(1.0, abs(e_cur)):
                rec.status = "error"
                rec.error = f"energy increased at n={n}"
                raise DivergenceError(
                    f"energy increased on an accepted step at n={n} "
                    f"({e_cur:.15e} -> {row.energy:.15e}); the inverse-solve "
                    "tolerance is too loose for this stage")
            delta_e = abs(row.energy - e_cur)
            e_cur = row.energy
            if stage.stop_residual is not None \
                    and row.residual_inf <= stage.stop_residual:
                rec.status = "residual_met"
                break
            if stage.stop_energy_delta is not None \
                    and delta_e <= stage.stop_energy_delta:
                rec.status = "energy_delta_met"
                break
            if stage.stop_energy_value is not None \
                    and row.energy <= stage.stop_energy_value:
                rec.status = "energy_value_met"
                break
    return state, records


def _lambda_of(ops: OperatorSet, state: Field) -> float:
    h = apply_h_phi(ops, state, state)
    return inner_l2(h, state)


def fit_tail_rate(rows, e_ref: float, resid_threshold: float = 1e-4,
                  tail_fraction: float = 0.6, min_points: int = 8):
    """Least-squares tail rate of sqrt(E^n - E_ref): returns (rho, n_points).

    Window: iterations after the residual first drops below `resid_threshold`,
    restricted to the last `tail_fraction` of that range, excluding points at
    or below the double-precision cancellation floor of E - E_ref.
    """
    floor = 64.0 * np.finfo(float).eps * max(1.0, abs(e_ref))
    ns, ys = [], []
    start = None
    for r in rows:
        if start is None and r.residual_inf < resid_threshold:
            start = r.n
        if start is not None and r.n >= start:
            err = r.energy - e_ref
            if err > floor:
                ns.append(r.n)
                ys.append(0.5 * np.log10(err))
    if len(ns) < min_points:
        raise ValueError(
            f"tail fit needs at least {min_points} usable points, got {len(ns)}")
    cut = int(len(ns) * (1.0 - tail_fraction))
    ns, ys = np.asarray(ns[cut:], dtype=float), np.asarray(ys[cut:])
    slope = np.polyfit(ns, ys, 1)[0]
    return float(10.0**slope), len(ns)
