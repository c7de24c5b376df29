import numpy as np
import pytest

import gprg
from gprg.errors import ConfigurationError, GridMismatchError

from conftest import poly_gauss_field, rough_field


class TestBuildPolarGrid:
    def test_paper_grid_spacings(self):
        g = gprg.build_polar_grid(256, 1024, 12.0)
        assert g.h_r == 12.0 / 2**8
        assert g.h_theta == 2.0 * np.pi / 2**10

    def test_staggered_nodes(self):
        g = gprg.build_polar_grid(4, 16, 1.0)
        assert np.allclose(g.r_nodes, [0.125, 0.375, 0.625, 0.875], rtol=0, atol=0)

    @pytest.mark.parametrize("n_r,n_theta,radius", [
        (64, 128, 12.0), (4, 16, 1.0), (37, 70, 3.3), (128, 256, 8.0)])
    def test_quadrature_exact_for_area(self, n_r, n_theta, radius):
        g = gprg.build_polar_grid(n_r, n_theta, radius)
        area = np.pi * radius**2
        assert abs(g.weights.sum() - area) <= 1e-12 * area

    def test_nodes_interior(self):
        g = gprg.build_polar_grid(16, 32, 5.0)
        assert np.all(g.r_nodes > 0)
        assert np.all(g.r_nodes < g.radius)

    @pytest.mark.parametrize("bad", [
        dict(n_r=3, n_theta=32, radius=1.0),
        dict(n_r=8, n_theta=8, radius=1.0),
        dict(n_r=8, n_theta=17, radius=1.0),
        dict(n_r=8, n_theta=32, radius=0.0),
        dict(n_r=8, n_theta=32, radius=-2.0),
    ])
    def test_rejects_bad_configuration(self, bad):
        with pytest.raises(ConfigurationError):
            gprg.build_polar_grid(**bad)


class TestInnerProduct:
    def test_normalized_gaussian_mass(self):
        # int_{R^2} e^{-r^2} dx = pi (truncation at R = 12 negligible); the
        # midpoint rule adds the Euler-Maclaurin term (h^2/24) f'(0) with
        # f(r) = 2 r e^{-r^2}, i.e. exactly h^2/12 at leading order
        g = gprg.build_polar_grid(128, 256, 12.0)
        vals = np.exp(-0.5 * g.r_nodes[:, None] ** 2) / np.sqrt(np.pi) \
            * np.ones((1, g.n_theta))
        u = gprg.Field(g, vals + 0j)
        err = gprg.inner_l2(u, u) - 1.0
        assert abs(err) <= 1e-3
        assert err == pytest.approx(g.h_r**2 / 12.0, rel=1e-2)

    def test_distinct_fourier_modes_orthogonal(self):
        g = gprg.build_polar_grid(32, 64, 4.0)
        gr = np.exp(-g.r_nodes[:, None] ** 2)
        th = g.theta_nodes[None, :]
        u = gprg.Field(g, gr * np.exp(1j * th))
        v = gprg.Field(g, gr * np.exp(2j * th))
        assert abs(gprg.inner_l2(u, v)) <= 1e-14

    def test_i_u_orthogonal_to_u(self):
        g = gprg.build_polar_grid(16, 32, 3.0)
        u = rough_field(g, 0)
        assert gprg.inner_l2(gprg.Field(g, 1j * u.values), u) == 0.0

    @pytest.mark.parametrize("seed", range(5))
    def test_real_inner_product_axioms(self, seed):
        g = gprg.build_polar_grid(12, 24, 2.0)
        u, v, w = (rough_field(g, 10 * seed + k) for k in range(3))
        s = gprg.inner_l2(u, v)
        assert s == pytest.approx(gprg.inner_l2(v, u), rel=1e-14)
        a, b = 0.37, -1.21
        lin = gprg.Field(g, a * u.values + b * v.values)
        assert gprg.inner_l2(lin, w) == pytest.approx(
            a * gprg.inner_l2(u, w) + b * gprg.inner_l2(v, w), rel=1e-12)
        assert gprg.inner_l2(u, u) > 0

    def test_grid_mismatch_rejected(self):
        g1 = gprg.build_polar_grid(8, 16, 1.0)
        g2 = gprg.build_polar_grid(8, 16, 2.0)
        with pytest.raises(GridMismatchError):
            gprg.inner_l2(rough_field(g1, 0), rough_field(g2, 0))


class TestH1Norm:
    def test_zero_field(self):
        g = gprg.build_polar_grid(8, 16, 1.0)
        assert gprg.norm_h1_discrete(gprg.Field(g, np.zeros((8, 16), complex))) == 0.0

    def test_phase_invariance(self):
        g = gprg.build_polar_grid(24, 48, 6.0)
        u = poly_gauss_field(g, 3)
        v = gprg.Field(g, np.exp(1.3j) * u.values)
        a, b = gprg.norm_h1_discrete(u), gprg.norm_h1_discrete(v)
        assert abs(a - b) <= 1e-14 * a

    def test_positive_on_nonzero(self):
        g = gprg.build_polar_grid(8, 16, 1.0)
        assert gprg.norm_h1_discrete(rough_field(g, 4)) > 0


class TestRotation:
    def test_identity_shifts(self):
        g = gprg.build_polar_grid(8, 16, 1.0)
        u = rough_field(g, 1)
        assert np.array_equal(gprg.rotate_by_index(u, 0).values, u.values)
        assert np.array_equal(gprg.rotate_by_index(u, g.n_theta).values, u.values)

    def test_isometry(self):
        g = gprg.build_polar_grid(16, 32, 2.0)
        u, v = rough_field(g, 2), rough_field(g, 3)
        base = gprg.inner_l2(u, v)
        for k in (1, 7, 19):
            ru, rv = gprg.rotate_by_index(u, k), gprg.rotate_by_index(v, k)
            assert gprg.inner_l2(ru, rv) == pytest.approx(base, rel=1e-14)

    def test_index_shift_definition(self):
        g = gprg.build_polar_grid(8, 16, 1.0)
        u = rough_field(g, 5)
        r = gprg.rotate_by_index(u, 3)
        assert r.values[2, 7] == u.values[2, (7 - 3) % 16]

    def test_phase_action_isometry(self):
        g = gprg.build_polar_grid(16, 32, 2.0)
        u = rough_field(g, 6)
        n0 = gprg.norm_l2(u)
        for alpha in (0.3, 1.7, -2.2):
            n1 = gprg.norm_l2(gprg.Field(g, np.exp(1j * alpha) * u.values))
            assert abs(n1 - n0) <= 1e-14 * n0


class TestFieldIO:
    def test_binary_round_trip(self, tmp_path):
        g = gprg.build_polar_grid(8, 16, 1.5)
        u = rough_field(g, 8)
        path = tmp_path / "f.gpfld"
        gprg.save_field(path, u)
        assert path.stat().st_size == 32 + 16 * 8 * 16
        v = gprg.load_field(path)
        assert np.array_equal(u.values, v.values)
        assert v.grid.radius == 1.5

    def test_header_layout(self, tmp_path):
        g = gprg.build_polar_grid(8, 16, 1.5)
        path = tmp_path / "f.gpfld"
        gprg.save_field(path, rough_field(g, 9))
        raw = path.read_bytes()
        assert raw[:8] == b"GPRGFLD1"
        assert int.from_bytes(raw[8:16], "little") == 8
        assert int.from_bytes(raw[16:24], "little") == 16

    def test_grid_mismatch_on_load(self, tmp_path):
        g = gprg.build_polar_grid(8, 16, 1.5)
        path = tmp_path / "f.gpfld"
        gprg.save_field(path, rough_field(g, 9))
        other = gprg.build_polar_grid(8, 16, 2.5)
        with pytest.raises(GridMismatchError):
            gprg.load_field(path, grid=other)

    def test_csv_export(self, tmp_path):
        g = gprg.build_polar_grid(4, 16, 1.0)
        u = rough_field(g, 10)
        path = tmp_path / "f.csv"
        gprg.export_field_csv(path, u)
        lines = path.read_text().splitlines()
        assert lines[0] == "r,theta,re,im,abs2"
        assert len(lines) == 1 + 4 * 16
        first = [float(x) for x in lines[1].split(",")]
        assert first[0] == g.r_nodes[0]
        assert first[2] == u.values[0, 0].real
