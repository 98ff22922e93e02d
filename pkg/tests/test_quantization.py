import math

import numpy as np
import pytest

import nclaplace as nc
from nclaplace.errors import ConsistencyError, DomainError
from nclaplace.quantization import (
    norm_bound,
    read_matrix_binary,
    read_matrix_json,
    write_matrix_binary,
    write_matrix_json,
)
from nclaplace.surface import Profile


TWO_PI = 2.0 * math.pi


def _random_real_blf(seed, max_mode=3, interval=(-1.0, 1.0)):
    """Real-valued band-limited function with random polynomial profiles."""
    rng = np.random.default_rng(seed)
    modes = {}
    for j in range(0, max_mode + 1):
        c = rng.standard_normal(3) + (1j * rng.standard_normal(3) if j else 0)

        def f(z, c=c):
            z = np.asarray(z)
            return c[0] + c[1] * z + c[2] * z * z

        def d1(z, c=c):
            z = np.asarray(z)
            return c[1] + 2 * c[2] * z

        def d2(z, c=c):
            return np.full(np.shape(z), 2 * c[2]) if np.ndim(z) else 2 * c[2]

        modes[j] = Profile(f, d1, d2)
    for j in range(1, max_mode + 1):
        pos = modes[j]
        modes[-j] = Profile(
            lambda z, pos=pos: np.conj(pos(z)),
            lambda z, pos=pos: np.conj(pos.d1(z)),
            lambda z, pos=pos: np.conj(pos.d2(z)),
        )
    return nc.BandLimitedFunction(modes, interval, real_valued=True)


class TestGrid:
    def test_paper_nodes_example(self):
        g = nc.build_grid(4, -1, 1, 1)
        assert g.hbar == (1 - (-1)) * 1.0 / 4
        np.testing.assert_allclose(g.nodes(), [-0.5, 0.0, 0.5, 1.0], atol=0)

    def test_table_scale(self):
        g = nc.build_grid(2000, -1, 1, 1)
        assert g.hbar == pytest.approx(0.001, abs=0)

    def test_midpoint_value(self):
        g = nc.build_grid(4, -1, 1, 1)
        assert g.pair_value(1, 2) == pytest.approx(-0.25, abs=0)

    def test_midpoint_symmetry_and_diagonal(self):
        g = nc.build_grid(7, -1, 1, 1.3)
        for n in range(1, 8):
            assert g.pair_value(n, n) == g.node(n)
            for m in range(1, 8):
                assert g.pair_value(n, m) == g.pair_value(m, n)

    def test_symmetric_offset_nodes(self):
        g = nc.build_grid(4, -1, 1, 1, "symmetric")
        np.testing.assert_allclose(g.nodes(), [-0.75, -0.25, 0.25, 0.75], atol=0)

    def test_validation(self):
        with pytest.raises(ValueError):
            nc.build_grid(1, -1, 1, 1)
        with pytest.raises(ValueError):
            nc.build_grid(4, 1, -1, 1)
        with pytest.raises(ValueError):
            nc.build_grid(4, -1, 1, 0.0)
        with pytest.raises(ValueError):
            nc.build_grid(4, -1, 1, 1, "middle")


class TestDefaultBeta:
    def test_unit_sphere(self, unit_sphere):
        assert nc.default_beta(unit_sphere) == pytest.approx(1.0, rel=1e-9)

    def test_radius_two_sphere(self):
        assert nc.default_beta(nc.sphere(2.0)) == pytest.approx(2.0, rel=1e-9)

    def test_prolate(self, prolate_112):
        a, c = 1.0, 2.0
        ecc = math.sqrt(1 - a * a / (c * c))
        area = 2 * math.pi * a * a * (1 + (c / (a * ecc)) * math.asin(ecc))
        assert nc.default_beta(prolate_112) == pytest.approx(area / (4 * math.pi), rel=1e-9)


class TestQuantize:
    def test_constant_gives_identity(self, unit_sphere):
        one = nc.BandLimitedFunction({0: nc.constant_profile(1.0)}, (-1.0, 1.0))
        g = nc.build_grid(6, -1, 1, 1)
        np.testing.assert_array_equal(nc.quantize(one, g), np.eye(6))

    def test_height_gives_node_diagonal(self, unit_sphere):
        g = nc.build_grid(4, -1, 1, 1)
        T = nc.quantize(unit_sphere.coord_z, g)
        np.testing.assert_allclose(T, np.diag([-0.5, 0.0, 0.5, 1.0]), atol=0)

    def test_sphere_x_two_by_two(self, unit_sphere):
        g = nc.build_grid(2, -1, 1, 1)
        T = nc.quantize(unit_sphere.coord_x, g)
        val = 0.5 * math.sqrt(1 - 0.25)
        assert T[0, 1] == pytest.approx(val, abs=1e-15)
        assert T[1, 0] == pytest.approx(val, abs=1e-15)
        assert val == pytest.approx(0.4330127019, abs=1e-10)

    def test_hermitian_for_random_real_function(self):
        f = _random_real_blf(seed=11)
        g = nc.build_grid(16, -1, 1, 1)
        T = nc.quantize(f, g)
        assert np.abs(T - T.conj().T).max() <= 1e-13 * max(1.0, np.abs(T).max())

    def test_band_limit_must_stay_below_size(self):
        f = _random_real_blf(seed=12, max_mode=4)
        with pytest.raises(ValueError):
            nc.quantize(f, nc.build_grid(4, -1, 1, 1))

    def test_domain_error_when_grid_leaves_interval(self, prolate_112):
        # beta > 1 pushes nodes past the parameter interval
        beta = nc.default_beta(prolate_112)
        assert beta > 1
        g = nc.build_grid(50, -1, 1, beta)
        with pytest.raises(DomainError):
            nc.quantize(prolate_112.coord_x, g)


class TestCoordinateMatrices:
    def test_sphere_two_by_two(self, unit_sphere):
        g = nc.build_grid(2, -1, 1, 1)
        coords = nc.coordinate_matrices(unit_sphere, g)
        v = math.sqrt(3) / 4
        np.testing.assert_allclose(coords.X, [[0, v], [v, 0]], atol=1e-15)
        np.testing.assert_allclose(coords.Y, [[0, 1j * v], [-1j * v, 0]], atol=1e-15)
        np.testing.assert_allclose(coords.Z, np.diag([0.0, 1.0]), atol=0)

    def test_ellipsoid_axis_scaling(self):
        e = nc.ellipsoid(2.0, 3.0, 1.0)
        g = nc.build_grid(2, -1, 1, 1)
        coords = nc.coordinate_matrices(e, g)
        v = math.sqrt(3) / 4
        assert coords.X[0, 1] == pytest.approx(2 * v, abs=1e-15)
        assert coords.Y[0, 1] == pytest.approx(3j * v, abs=1e-15)
        np.testing.assert_allclose(coords.Z, np.diag([0.0, 1.0]), atol=0)

    def test_structure_tridiagonal_and_diagonal(self, prolate_112):
        g = nc.build_grid(12, -1, 1, 1)
        coords = nc.coordinate_matrices(prolate_112, g)
        band = np.tri(12, 12, 1) * np.tri(12, 12, 1).T
        for M in (coords.X, coords.Y):
            assert np.abs(M - M * band).max() == 0.0
            assert np.abs(np.diag(M)).max() == 0.0
        assert np.abs(coords.Z - np.diag(np.diag(coords.Z))).max() == 0.0

    def test_sphere_large_max_entry_near_equator(self, unit_sphere):
        g = nc.build_grid(2000, -1, 1, 1)
        X = nc.quantize(unit_sphere.coord_x, g)
        scan = np.abs(X).max()
        amplitudes = 0.5 * np.sqrt(1.0 - g.offset_pair_values(1) ** 2)
        assert scan == pytest.approx(amplitudes.max(), abs=0)
        assert scan == pytest.approx(0.5, abs=1e-3)

    def test_commutator_identity_with_height(self, unit_sphere):
        for N in (2, 16, 101):
            g = nc.build_grid(N, -1, 1, 1)
            c = nc.coordinate_matrices(unit_sphere, g)
            dev = np.abs((c.Z @ c.X - c.X @ c.Z) - 1j * g.hbar * c.Y).max()
            assert dev <= 1e-14


class TestTrace:
    def test_identity_trace_forced_by_beta(self, unit_sphere):
        g = nc.build_grid(10, -1, 1, 1)
        assert nc.trace_functional(np.eye(10), g) == pytest.approx(4 * math.pi, rel=1e-12)

    def test_height_trace_is_plain_node_sum(self, unit_sphere):
        g = nc.build_grid(37, -1, 1, 1)
        T = nc.quantize(unit_sphere.coord_z, g)
        assert nc.trace_functional(T, g) == pytest.approx(
            TWO_PI * g.hbar * g.nodes().sum(), abs=1e-14
        )

    def test_height_squared_trace_converges_to_integral(self, unit_sphere):
        # quadrature oracle: int z^2 over the unit sphere = 4*pi/3
        from scipy.integrate import quad

        integral = TWO_PI * quad(lambda z: z * z, -1, 1, epsabs=1e-13)[0]
        assert integral == pytest.approx(4 * math.pi / 3, rel=1e-12)
        z2 = nc.pointwise_product(unit_sphere.coord_z, unit_sphere.coord_z)
        errs = []
        for N in (100, 200):
            g = nc.build_grid(N, -1, 1, 1)
            errs.append(abs(nc.trace_functional(nc.quantize(z2, g), g) - integral))
        # the right-endpoint sum of an even function is second-order accurate:
        # error = 8*pi/(3*N^2), so doubling N divides the error by four
        for N, err in zip((100, 200), errs):
            assert err == pytest.approx(8 * math.pi / (3 * N * N), rel=1e-6)
        assert errs[0] / errs[1] == pytest.approx(4.0, abs=0.1)

    def test_trace_rejects_large_imaginary_part(self, unit_sphere):
        g = nc.build_grid(4, -1, 1, 1)
        with pytest.raises(ConsistencyError):
            nc.trace_functional(1j * np.eye(4), g)

    def test_equatorial_square_trace_converges(self, unit_sphere):
        # int x^2 over the unit sphere = pi * int (1 - z^2) dz = 4*pi/3
        integral = 4 * math.pi / 3
        x2 = nc.pointwise_product(unit_sphere.coord_x, unit_sphere.coord_x)
        errs = []
        for N in (100, 200):
            g = nc.build_grid(N, -1, 1, 1)
            errs.append(abs(nc.trace_functional(nc.quantize(x2, g), g) - integral))
        assert errs[0] / errs[1] >= 1.9


class TestAxiomDefects:
    def test_same_function_has_no_defect(self, unit_sphere):
        g = nc.build_grid(40, -1, 1, 1)
        d = nc.axiom_defects(unit_sphere.coord_z, unit_sphere.coord_z, g)
        assert d.product_defect == 0.0
        assert d.bracket_defect == 0.0

    def test_height_pairs_bracket_exact(self, unit_sphere):
        # pairs involving the diagonal coordinate reproduce the bracket at
        # machine precision on both grid conventions
        for offset in ("paper", "symmetric"):
            for N in (50, 100):
                g = nc.build_grid(N, -1, 1, 1, offset)
                d = nc.axiom_defects(unit_sphere.coord_z, unit_sphere.coord_x, g)
                assert d.bracket_defect <= 1e-12

    def test_equatorial_pair_at_n100(self, unit_sphere):
        g = nc.build_grid(100, -1, 1, 1)
        d = nc.axiom_defects(unit_sphere.coord_x, unit_sphere.coord_y, g)
        assert d.product_defect < 0.1
        # boundary rows of the default grid pin the scaled-commutator defect
        # near 1/2; the symmetric grid removes it entirely
        assert 0.4 < d.bracket_defect < 0.55
        gs = nc.build_grid(100, -1, 1, 1, "symmetric")
        ds = nc.axiom_defects(unit_sphere.coord_x, unit_sphere.coord_y, gs)
        assert ds.bracket_defect <= 1e-12
        assert ds.product_defect < 0.1

    def test_product_defect_halves_with_size(self, unit_sphere):
        vals = []
        for N in (50, 100, 200):
            g = nc.build_grid(N, -1, 1, 1)
            vals.append(nc.axiom_defects(unit_sphere.coord_z, unit_sphere.coord_x, g).product_defect)
        assert vals[0] / vals[1] == pytest.approx(2.0, abs=0.1)
        assert vals[1] / vals[2] == pytest.approx(2.0, abs=0.1)

    def test_product_defects_decrease_monotonically(self, unit_sphere):
        x, y, z = unit_sphere.coordinates
        for f, g_fun in [(x, y), (y, z), (z, x)]:
            vals = [
                nc.axiom_defects(f, g_fun, nc.build_grid(N, -1, 1, 1)).product_defect
                for N in (50, 100, 200, 400)
            ]
            assert all(a > b for a, b in zip(vals, vals[1:]))

    def test_frobenius_reported_alongside(self, unit_sphere):
        g = nc.build_grid(60, -1, 1, 1)
        d = nc.axiom_defects(unit_sphere.coord_x, unit_sphere.coord_y, g)
        assert d.product_defect_fro >= d.product_defect
        assert d.bracket_defect_fro >= d.bracket_defect


def test_uniform_boundedness_proxy(unit_sphere):
    for N in (8, 16, 32, 64, 128, 256):
        g = nc.build_grid(N, -1, 1, 1)
        for blf in unit_sphere.coordinates:
            T = nc.quantize(blf, g)
            opnorm = np.linalg.svd(T, compute_uv=False)[0]
            assert opnorm <= norm_bound(blf, g) + 1e-12


class TestDequantize:
    def test_roundtrip_exact_at_samples(self):
        f = _random_real_blf(seed=13, max_mode=3)
        g = nc.build_grid(16, -1, 1, 1)
        T = nc.quantize(f, g)
        back = nc.dequantize(T, g, max_mode=3)
        for j in range(-3, 4):
            zpts, vals = back.modes[j].samples
            np.testing.assert_array_equal(vals, f.profile_values(j, zpts))

    def test_identity_has_single_constant_mode(self):
        g = nc.build_grid(8, -1, 1, 1)
        back = nc.dequantize(np.eye(8), g, max_mode=3)
        assert set(back.modes) == {0}
        np.testing.assert_array_equal(back.modes[0].samples[1], np.ones(8))

    def test_max_mode_validated(self):
        g = nc.build_grid(4, -1, 1, 1)
        with pytest.raises(ValueError):
            nc.dequantize(np.eye(4), g, max_mode=4)


class TestMatrixDumps:
    def test_binary_roundtrip_and_header(self, tmp_path, unit_sphere):
        g = nc.build_grid(5, -1, 1, 1)
        X = nc.quantize(unit_sphere.coord_x, g)
        path = tmp_path / "X.nclq"
        write_matrix_binary(path, X)
        raw = path.read_bytes()
        assert raw[:4] == b"NCLQ"
        assert len(raw) == 32 + 16 * 25
        M, flags = read_matrix_binary(path)
        np.testing.assert_array_equal(M, X)
        assert flags == 1  # hermitian

    def test_json_roundtrip(self, tmp_path, unit_sphere):
        g = nc.build_grid(4, -1, 1, 1)
        Y = nc.quantize(unit_sphere.coord_y, g)
        path = tmp_path / "Y.json"
        write_matrix_json(path, Y)
        np.testing.assert_array_equal(read_matrix_json(path), Y)

    def test_dump_coordinate_matrices(self, tmp_path, unit_sphere):
        g = nc.build_grid(4, -1, 1, 1)
        coords = nc.coordinate_matrices(unit_sphere, g)
        written = nc.dump_coordinate_matrices(coords, tmp_path)
        assert len(written) == 6
        M, _ = read_matrix_binary(tmp_path / "coords_Z.nclq")
        np.testing.assert_array_equal(M, coords.Z)
