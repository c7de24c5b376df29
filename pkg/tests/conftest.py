import numpy as np
import pytest

import gprg


def poly_gauss_field(grid, seed, sigma=None, degree=3):
    """Smooth complex test field: random polynomial in (x, y) under a
    Gaussian envelope.  Decays well inside the disk, so Dirichlet and
    domain-truncation effects are negligible."""
    rng = np.random.default_rng(seed)
    r = grid.r_nodes[:, None]
    th = grid.theta_nodes[None, :]
    x = r * np.cos(th)
    y = r * np.sin(th)
    sigma = sigma if sigma is not None else grid.radius / 4.0
    f = np.zeros((grid.n_r, grid.n_theta), dtype=complex)
    for j in range(degree + 1):
        for k in range(degree + 1 - j):
            c = rng.standard_normal() + 1j * rng.standard_normal()
            f = f + c * x**j * y**k
    f *= np.exp(-((r / sigma) ** 2))
    return gprg.Field(grid, f)


def rough_field(grid, seed):
    rng = np.random.default_rng(seed)
    vals = rng.standard_normal((grid.n_r, grid.n_theta)) \
        + 1j * rng.standard_normal((grid.n_r, grid.n_theta))
    return gprg.Field(grid, vals)


@pytest.fixture(scope="session")
def oracle_setup():
    """Tiny rotating nonlinear problem for dense cross-checks."""
    grid = gprg.build_polar_grid(8, 16, 6.0)
    params = gprg.ProblemParams(omega=0.5, eta=20.0)
    ops = gprg.build_operators(grid, params)
    state = gprg.normalized(poly_gauss_field(grid, 7))
    return grid, params, ops, state


@pytest.fixture(scope="session")
def converged_small():
    """Converged rotating vortex state on a small grid (shared by the
    riemannian / spectral / solver tests)."""
    grid = gprg.build_polar_grid(40, 80, 8.0)
    params = gprg.ProblemParams(omega=0.6, eta=60.0)
    ops = gprg.build_operators(grid, params)
    start = gprg.initial_guess("perturbed", grid, params, m=1, seed=11,
                               amplitude=0.3)
    stages = [
        gprg.StageSpec(precond=gprg.PreconditionerSpec("P2"),
                       policy=gprg.StepPolicy.backtracking(),
                       max_iters=2000, stop_residual=1e-6),
        gprg.StageSpec(precond=gprg.PreconditionerSpec("P4", sigma0=1e-2),
                       policy=gprg.StepPolicy.backtracking(),
                       max_iters=2000, stop_residual=1e-11),
    ]
    state, records = gprg.run(stages, ops, start)
    assert records[-1].status == "residual_met"
    return grid, params, ops, state
