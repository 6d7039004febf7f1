"""Grid, transform and eth-operator tests for the spectral layer."""

import numpy as np
import pytest

from nullfoliate.errors import (ConfigurationError, OutOfDomainError,
                                UnsupportedSpinError)
from nullfoliate.sphere import (SpinField, analyze, build_grid, eth, ethbar,
                                interp_generator, laplacian_round, multiply,
                                synthesize)

from conftest import harmonic, random_spin_field


class TestGrid:
    def test_node_counts(self):
        g = build_grid(4)
        assert g.shape == (5, 9)
        g15 = build_grid(15)
        assert g15.shape == (16, 31)

    def test_weights_sum_to_sphere_area(self):
        g = build_grid(4)
        assert abs(g.weights.sum() - 4.0 * np.pi) < 1e-13

    def test_lmax_too_small_rejected(self):
        with pytest.raises(ConfigurationError):
            build_grid(3)

    def test_y20_orthonormality(self, grid8):
        f = harmonic(grid8, 2, 0)
        val = grid8.integrate(np.abs(f.samples) ** 2)
        assert abs(val - 1.0) < 1e-12

    def test_quadrature_orthogonality_cross_mode(self, grid8):
        f = harmonic(grid8, 2, 0)
        h = harmonic(grid8, 4, 0)
        val = grid8.integrate(f.samples * np.conj(h.samples))
        assert abs(val) < 1e-12


class TestTransforms:
    def test_y00_single_coefficient(self, grid8):
        samples = np.full(grid8.shape, np.sqrt(1.0 / (4.0 * np.pi)),
                          dtype=complex)
        a = analyze(samples, 0, grid8)
        assert abs(a[0, grid8.Lmax] - 1.0) < 1e-13
        a[0, grid8.Lmax] = 0.0
        assert np.max(np.abs(a)) < 1e-13

    @pytest.mark.parametrize("spin", [-2, -1, 0, 1, 2])
    def test_roundtrip_band_limited(self, grid12, spin):
        f = random_spin_field(grid12, spin, seed=42 + spin)
        back = analyze(f.samples, spin, grid12)
        assert np.max(np.abs(back - f.coeffs)) < 1e-12

    def test_spin1_eth_y20_convention(self, grid8):
        """Samples of eth Y20 / sqrt(6) carry a unit (2,0) spin-1 coefficient."""
        th = grid8.theta_nodes
        # eth Y20 = -d/dtheta Y20 for the m = 0 harmonic
        dY20 = np.sqrt(5.0 / (16.0 * np.pi)) * 6.0 * np.cos(th) * np.sin(th)
        samples = np.repeat(dY20[:, None], grid8.nphi, axis=1) / np.sqrt(6.0)
        a = analyze(samples.astype(complex), 1, grid8)
        assert abs(a[2, grid8.Lmax] - 1.0) < 1e-12
        a[2, grid8.Lmax] = 0.0
        assert np.max(np.abs(a)) < 1e-12

    def test_unsupported_spin_rejected(self, grid8):
        with pytest.raises(UnsupportedSpinError):
            analyze(np.zeros(grid8.shape, dtype=complex), 3, grid8)
        with pytest.raises(UnsupportedSpinError):
            synthesize(np.zeros((9, 17), dtype=complex), -3, grid8)

    def test_wigner_tables_match_sympy(self, grid8):
        """Spot-check the theta tables against exact Wigner-d values."""
        sympy = pytest.importorskip("sympy")
        from sympy.physics.quantum.spin import Rotation

        from nullfoliate.sphere import _tables

        lam = _tables(grid8.Lmax, -1)
        theta = grid8.theta_nodes[3]
        for (l, m) in [(1, 0), (2, 1), (3, -2), (4, 4)]:
            d = complex(Rotation.d(l, -m, -1,
                                   sympy.Float(theta)).doit()).real
            expect = (-1.0) ** m * np.sqrt((2 * l + 1) / (4 * np.pi)) * d
            assert abs(lam[l, m + grid8.Lmax, 3] - expect) < 1e-12

    def test_conjugation_symmetry(self, grid8):
        """conj(sYlm) = (-1)^{s+m} (-s)Y(l,-m) holds for the tables."""
        from nullfoliate.sphere import _tables

        lam_p = _tables(grid8.Lmax, 2)
        lam_m = _tables(grid8.Lmax, -2)
        L = grid8.Lmax
        for l in range(2, L + 1):
            for m in range(-l, l + 1):
                lhs = lam_p[l, m + L] * (-1.0) ** (2 + m)
                assert np.max(np.abs(lhs - lam_m[l, -m + L])) < 1e-12


class TestEth:
    def test_ethbar_eth_is_laplacian(self, grid8):
        f = harmonic(grid8, 3, 0)
        out = ethbar(eth(f))
        assert abs(out.coeff(3, 0) + 12.0) < 1e-12

    def test_eth_of_constant_vanishes(self, grid8):
        c = SpinField.constant(grid8, 4.2)
        assert eth(c).max_abs() < 1e-12

    def test_commutator_is_twice_spin(self, grid12):
        eta = random_spin_field(grid12, 1, seed=7)
        comm = ethbar(eth(eta)).coeffs - eth(ethbar(eta)).coeffs
        assert np.max(np.abs(comm - 2.0 * eta.coeffs)) < 1e-11

    def test_eth_spin_range_guard(self, grid8):
        f = random_spin_field(grid8, 2, seed=1)
        with pytest.raises(UnsupportedSpinError):
            eth(f)
        with pytest.raises(UnsupportedSpinError):
            ethbar(random_spin_field(grid8, -2, seed=1))

    def test_laplacian_round_eigenvalues(self, grid8):
        f = harmonic(grid8, 2, 0)
        assert abs(laplacian_round(f, 1.0).coeff(2, 0) + 6.0) < 1e-13
        assert abs(laplacian_round(f, 2.0).coeff(2, 0) + 1.5) < 1e-13
        c = SpinField.constant(grid8, 1.0)
        assert laplacian_round(c).max_abs() < 1e-12

    def test_laplacian_round_requires_spin0(self, grid8):
        with pytest.raises(UnsupportedSpinError):
            laplacian_round(random_spin_field(grid8, 1, seed=2))


class TestProducts:
    def test_product_matches_pointwise(self, grid8):
        f = harmonic(grid8, 1, 0)
        p = multiply(f, f)
        assert np.max(np.abs(p.samples - f.samples ** 2)) < 1e-13

    def test_product_is_alias_free(self, grid12):
        """Coefficients of a quadratic product are exact up to the band limit."""
        f = random_spin_field(grid12, 1, seed=3, lmax=grid12.Lmax)
        g = random_spin_field(grid12, -1, seed=4, lmax=grid12.Lmax)
        p = multiply(f, g)
        big = build_grid(2 * grid12.Lmax + 1)
        fb = SpinField.from_coeffs(
            big, 1, _embed(f.coeffs, grid12.Lmax, big.Lmax))
        gb = SpinField.from_coeffs(
            big, -1, _embed(g.coeffs, grid12.Lmax, big.Lmax))
        exact = analyze(fb.samples * gb.samples, 0, big)
        L, Lb = grid12.Lmax, big.Lmax
        assert np.max(np.abs(p.coeffs
                             - exact[:L + 1, Lb - L:Lb + L + 1])) < 1e-12


def _embed(coeffs, L, Lbig):
    out = np.zeros((Lbig + 1, 2 * Lbig + 1), dtype=complex)
    out[:L + 1, Lbig - L:Lbig + L + 1] = coeffs
    return out


class TestGeneratorInterpolation:
    def _table(self, grid, fn, s_nodes):
        return np.stack([np.full(grid.shape, fn(s)) for s in s_nodes])

    def test_polynomial_reproduced_exactly(self, grid8):
        from nullfoliate._cheb import cgl_nodes
        s_nodes = cgl_nodes(32, 1.0, 2.5)
        table = self._table(grid8, lambda s: s ** 2, s_nodes)
        out = interp_generator(table, s_nodes, np.full(grid8.shape, 1.5))
        assert np.max(np.abs(out - 2.25)) < 1e-13

    def test_rational_generator(self, grid8):
        from nullfoliate._cheb import cgl_nodes
        s_nodes = cgl_nodes(32, 1.0, 2.5)
        table = self._table(grid8, lambda s: 2.0 / s, s_nodes)
        out = interp_generator(table, s_nodes, np.full(grid8.shape, 1.7))
        assert np.max(np.abs(out - 2.0 / 1.7)) < 1e-12

    def test_out_of_domain_raises(self, grid8):
        from nullfoliate._cheb import cgl_nodes
        s_nodes = cgl_nodes(16, 1.0, 2.5)
        table = self._table(grid8, lambda s: s, s_nodes)
        with pytest.raises(OutOfDomainError):
            interp_generator(table, s_nodes, np.full(grid8.shape, 2.6))

    def test_geometric_decay_in_node_count(self, grid8):
        """Error on an analytic generator decays geometrically when the
        node count doubles (slope well below -0.5 per doubling)."""
        from nullfoliate._cheb import cgl_nodes
        errs = []
        for n in [6, 12, 24]:
            s_nodes = cgl_nodes(n, 1.0, 2.5)
            table = self._table(grid8, lambda s: 2.0 / s, s_nodes)
            out = interp_generator(table, s_nodes, np.full(grid8.shape, 1.618))
            errs.append(max(np.max(np.abs(out - 2.0 / 1.618)), 1e-16))
        slopes = [np.log2(errs[i + 1] / errs[i]) for i in range(2)]
        assert all(s < -0.5 for s in slopes)


class TestReality:
    def test_real_scalar_has_conjugate_symmetric_coefficients(self, grid8):
        """Analysing real samples yields a_(l,-m) = (-1)^m conj(a_(l,m))."""
        rng = np.random.default_rng(5)
        samples = rng.normal(size=grid8.shape).astype(complex)
        a = analyze(samples, 0, grid8)
        L = grid8.Lmax
        for l in range(L + 1):
            for m in range(1, l + 1):
                assert abs(a[l, L - m]
                           - (-1.0) ** m * np.conj(a[l, L + m])) < 1e-12
