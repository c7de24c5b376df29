import numpy as np
import pytest

import gprg
from gprg.errors import ConfigurationError
from gprg.grids import Field
from gprg.oracle import assemble_dense, field_to_vec, vec_to_field
from gprg.operators import apply_h0

from conftest import poly_gauss_field, rough_field


@pytest.fixture(scope="module")
def dense(oracle_setup):
    grid, params, ops, state = oracle_setup
    # shifted-Hessian metric is only coercive when sigma0 clears the gap
    # between lambda~ and the bottom of the Hessian spectrum; read that gap
    # off the dense assembly so the fixture state (not a minimizer) works
    import scipy.linalg
    probe = assemble_dense(ops, state)
    lam_min = scipy.linalg.eigh(0.5 * (probe.form("hess") + probe.form("hess").T),
                                probe.mass, eigvals_only=True)[0]
    sigma0 = gprg.lambda_tilde(ops, state) - lam_min + 0.5
    spec = gprg.PreconditionerSpec("P4", sigma0=sigma0, inverse_tol=1e-13)
    return ops, state, spec, assemble_dense(ops, state, spec)


class TestVectorConvention:
    def test_round_trip(self, oracle_setup):
        grid, _, _, _ = oracle_setup
        u = rough_field(grid, 0)
        assert np.array_equal(vec_to_field(grid, field_to_vec(u)).values, u.values)

    def test_stacking_order(self, oracle_setup):
        grid, _, _, _ = oracle_setup
        u = rough_field(grid, 1)
        x = field_to_vec(u)
        n = grid.size
        assert np.array_equal(x[:n], u.values.real.ravel())
        assert np.array_equal(x[n:], u.values.imag.ravel())


class TestDenseAgainstStencils:
    def test_size_guard(self):
        g = gprg.build_polar_grid(128, 64, 4.0)
        ops = gprg.build_operators(g, gprg.ProblemParams())
        with pytest.raises(ConfigurationError):
            assemble_dense(ops, gprg.initial_guess("gaussian", g, ops.params))

    def test_mass_matrix_diagonal(self, dense):
        ops, state, _, ds = dense
        m = ds.mass
        assert np.array_equal(np.diag(m),
                              np.concatenate((ops.grid.weights.ravel(),
                                              ops.grid.weights.ravel())))
        assert np.count_nonzero(m - np.diag(np.diag(m))) == 0

    @pytest.mark.parametrize("seed", range(20))
    def test_h_phi_action_matches(self, dense, seed):
        ops, state, _, ds = dense
        u = rough_field(ops.grid, 100 + seed)
        ref = gprg.apply_h_phi(ops, state, u)
        got = ds.hphi_action @ field_to_vec(u)
        assert np.abs(got - field_to_vec(ref)).max() <= 1e-12

    def test_h0_and_hessian_actions_match(self, dense):
        ops, state, _, ds = dense
        for seed in range(5):
            u = rough_field(ops.grid, 200 + seed)
            assert np.abs(ds.h0_action @ field_to_vec(u)
                          - field_to_vec(apply_h0(ops, u))).max() <= 1e-12
            assert np.abs(ds.hess_action @ field_to_vec(u)
                          - field_to_vec(gprg.apply_hessian(ops, state, u))).max() <= 1e-12

    @pytest.mark.parametrize("which", ["h0", "hess", "prec"])
    def test_forms_symmetric(self, dense, which):
        _, _, _, ds = dense
        a = ds.form(which)
        assert np.abs(a - a.T).max() <= 1e-12 * np.abs(a).max()

    def test_larger_grid_cross_check(self):
        g = gprg.build_polar_grid(16, 32, 6.0)
        ops = gprg.build_operators(g, gprg.ProblemParams(omega=0.5, eta=20.0))
        state = gprg.normalized(poly_gauss_field(g, 3))
        ds = assemble_dense(ops, state)
        for seed in range(3):
            u = rough_field(g, seed)
            ref = gprg.apply_h_phi(ops, state, u)
            got = ds.hphi_action @ field_to_vec(u)
            assert np.abs(got - field_to_vec(ref)).max() <= 1e-12


class TestFiniteDifferenceOracle:
    def test_zero_direction(self, oracle_setup):
        _, _, ops, state = oracle_setup
        z = Field(ops.grid, np.zeros_like(state.values))
        assert gprg.fd_directional(ops, state, z, 1e-5) == 0.0

    def test_first_order_validates_gradient(self, oracle_setup):
        _, _, ops, state = oracle_setup
        v = poly_gauss_field(ops.grid, 9)
        fd = gprg.fd_directional(ops, state, v, 1e-5, order="first")
        an = gprg.inner_l2(gprg.euclidean_gradient(ops, state), v)
        assert an == pytest.approx(fd, rel=1e-6)

    def test_second_order_validates_hessian(self, oracle_setup):
        _, _, ops, state = oracle_setup
        v = poly_gauss_field(ops.grid, 10)
        fd = gprg.fd_directional(ops, state, v, 1e-4, order="second")
        an = gprg.inner_l2(gprg.apply_hessian(ops, state, v), v)
        assert an == pytest.approx(fd, rel=1e-5)

    def test_fd_second_order_in_h(self, oracle_setup):
        _, _, ops, state = oracle_setup
        v = poly_gauss_field(ops.grid, 11)
        an = gprg.inner_l2(gprg.euclidean_gradient(ops, state), v)
        errs = [abs(gprg.fd_directional(ops, state, v, h) - an)
                for h in (1e-2, 1e-3)]
        assert errs[1] == pytest.approx(errs[0] * 1e-2, rel=0.2)


class TestDenseSolvesAndEigs:
    def test_prec_inverse_matches_dense_solve(self, dense):
        ops, state, spec, ds = dense
        handle = gprg.assemble(spec, ops, state)
        for seed in range(5):
            w = rough_field(ops.grid, 300 + seed)
            got = handle.apply_inverse(w)
            ref = ds.solve_prec(w)
            scale = np.abs(ref.values).max()
            assert np.abs(got.values - ref.values).max() <= 1e-10 * scale

    def test_dense_tangent_eigs_rayleigh(self, dense):
        ops, state, _, ds = dense
        pairs = ds.eig_tangent(state, 4)
        for lam, v in pairs:
            hv = gprg.apply_hessian(ops, state, v)
            ray = gprg.inner_l2(hv, v) / gprg.inner_l2(v, v)
            assert ray == pytest.approx(lam, rel=1e-10)
            assert abs(gprg.inner_l2(v, state)) <= 1e-10
