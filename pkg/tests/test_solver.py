"""Picard-window and foliation-marching tests."""

import numpy as np
import pytest

from nullfoliate import geodesic, solver
from nullfoliate.errors import (BreakdownError, ConfigurationError,
                                LapseBoundError, OutOfDomainError)
from nullfoliate.sphere import SpinField
from nullfoliate.tensors import grad, hessian, mean


@pytest.fixture(scope="module")
def mink():
    return geodesic.gen_minkowski(Lmax=8, n_s=24)


@pytest.fixture(scope="module")
def schw():
    return geodesic.gen_schwarzschild(0.1, Lmax=8, n_s=32)


@pytest.fixture(scope="module")
def mms_small():
    spec = geodesic.MmsSpec(epsilon=1e-2, Lmax=12, n_s=32,
                            profile_l=2, profile_m=2)
    return geodesic.gen_manufactured(spec)


class TestQuadrature:
    def test_exact_on_cubics(self):
        k = 12
        v = np.arange(k + 1) / k
        vals = (1.0 + 2 * v - v ** 2 + 0.5 * v ** 3)[:, None, None]
        out = solver.cumulative_integral(vals * np.ones((1, 1, 1)), 1.0 / k)
        exact = v + v ** 2 - v ** 3 / 3 + v ** 4 / 8
        assert np.max(np.abs(out[:, 0, 0] - exact)) < 1e-14

    def test_fourth_order_on_quartics(self):
        """One-signed h^4 error with matched end rules: the pairwise order
        is 4.000 on a pure quartic."""
        errs = []
        for k in [8, 16, 32]:
            v = np.arange(k + 1) / k
            vals = (v ** 4)[:, None, None] * np.ones((1, 1, 1))
            out = solver.cumulative_integral(vals, 1.0 / k)
            errs.append(np.max(np.abs(out[:, 0, 0] - v ** 5 / 5)))
        orders = [np.log2(errs[i] / errs[i + 1]) for i in range(2)]
        assert all(abs(o - 4.0) < 0.02 for o in orders)


class TestConfig:
    def test_invalid_delta(self):
        with pytest.raises(ConfigurationError):
            solver.SolverConfig(delta=1.5)
        with pytest.raises(ConfigurationError):
            solver.SolverConfig(delta=0.0)

    def test_invalid_tol(self):
        with pytest.raises(ConfigurationError):
            solver.SolverConfig(tol=-1e-10)


class TestPicardWindow:
    def test_minkowski_exact_fixed_point(self, mink):
        """The flat cone converges at the first corrected iterate."""
        cfg = solver.SolverConfig(delta=0.5, dv=1.0 / 32.0, tol=1e-12, Lmax=8)
        win = solver.picard_window(mink, 1.0, np.ones(mink.grid.shape), cfg)
        assert win.iterations <= 2
        assert win.Delta_trace[-1] <= 1e-13
        for st in win.states:
            assert np.max(np.abs(np.real(st.s.samples) - st.v)) < 1e-13
            assert np.max(np.abs(np.real(st.logOmega.samples))) < 1e-13

    def test_schwarzschild_symmetry(self, schw):
        """Spherical symmetry keeps the mean-free source zero: Omega = 1,
        s = v through the window."""
        cfg = solver.SolverConfig(delta=0.25, dv=1.0 / 32.0, tol=1e-12)
        win = solver.picard_window(schw, 1.0, np.ones(schw.grid.shape), cfg)
        for st in win.states:
            assert np.max(np.abs(np.real(st.s.samples) - st.v)) < 1e-10
            assert np.max(np.abs(np.real(st.logOmega.samples))) < 1e-10

    def test_margin_refusal(self, mink):
        cfg = solver.SolverConfig(delta=0.25, dv=1.0 / 16.0)
        with pytest.raises(OutOfDomainError):
            solver.picard_window(mink, 1.0,
                                 np.full(mink.grid.shape, 2.48), cfg)

    def test_seed_lapse_bound_enforced(self):
        """A manufactured amplitude breaking |log Omega_0| <= 1/100 refuses
        to start."""
        spec = geodesic.MmsSpec(epsilon=0.05, Lmax=8, n_s=24,
                                profile_l=2, profile_m=2)
        data, _ = geodesic.gen_manufactured(spec)
        cfg = solver.SolverConfig(delta=0.25, dv=1.0 / 16.0)
        with pytest.raises(LapseBoundError):
            solver.picard_window(data, 1.0, np.ones(data.grid.shape), cfg)

    def test_mms_window_contracts(self, mms_small):
        data, exact = mms_small
        cfg = solver.SolverConfig(delta=0.1, dv=1.0 / 64.0, tol=1e-11)
        win = solver.picard_window(data, 1.0, np.ones(data.grid.shape), cfg,
                                   delta=0.1)
        assert win.kappa < 0.5
        assert win.iterations <= 20
        # Delta strictly decreases once under way
        for a, b in zip(win.Delta_trace[1:], win.Delta_trace[2:]):
            assert b < a


class TestContinueFoliation:
    def test_minkowski_end_to_end(self, mink):
        cfg = solver.SolverConfig(delta=0.25, dv=1.0 / 32.0)
        fol = solver.continue_foliation(mink, cfg, v_end=2.0)
        assert abs(fol.v_nodes[-1] - 2.0) < 1e-12
        assert fol.max_omega_dev() < 1e-12
        assert fol.max_graph_dev() < 1e-12

    def test_schwarzschild_end_to_end(self, schw):
        cfg = solver.SolverConfig(delta=0.25, dv=1.0 / 32.0)
        fol = solver.continue_foliation(schw, cfg, v_end=2.0)
        assert fol.max_omega_dev() < 1e-10
        assert fol.max_graph_dev() < 1e-10

    def test_monotone_graph(self, mms_small):
        """d_v s = Omega^{-1} > 0 pointwise on accepted solutions."""
        data, _ = mms_small
        cfg = solver.SolverConfig(delta=0.25, dv=1.0 / 32.0)
        fol = solver.continue_foliation(data, cfg, v_end=2.0)
        assert np.all(np.diff(fol.s, axis=0) > 0.0)
        assert np.max(np.abs(fol.logOmega)) < 0.1

    def test_mms_accuracy_and_order(self, mms_small):
        """Halving dv reduces the error against the sidecar by 2^4 (20%)."""
        data, exact = mms_small
        errs = []
        for dv in [1.0 / 16.0, 1.0 / 32.0]:
            cfg = solver.SolverConfig(delta=0.5, dv=dv, tol=1e-13)
            fol = solver.continue_foliation(data, cfg, v_end=2.0)
            errs.append(max(np.max(np.abs(fol.s[i] - exact.s_exact(v)))
                            for i, v in enumerate(fol.v_nodes)))
        factor = errs[0] / errs[1]
        assert 16.0 * 0.8 <= factor <= 16.0 * 1.2

    def test_fixed_point_self_consistency(self, mms_small):
        """Re-inserting an accepted foliation into the source assembly and
        lapse solve reproduces its own log Omega."""
        data, _ = mms_small
        cfg = solver.SolverConfig(delta=0.25, dv=1.0 / 32.0, tol=1e-12)
        fol = solver.continue_foliation(data, cfg, v_end=2.0)
        worst = 0.0
        for i in range(0, fol.n_levels, 7):
            metric = solver.induced_metric(data, fol.s[i])
            sf = fol.s_field(i)
            F = solver.assemble_F(data, fol.s[i], metric, grad(sf, metric),
                                  hessian(sf, metric))
            logom = solver.solve_lapse(metric, F)
            worst = max(worst, np.max(np.abs(np.real(logom.samples)
                                             - fol.logOmega[i])))
        assert worst < 1e-11

    def test_lapse_mean_free_invariant(self, mms_small):
        data, _ = mms_small
        cfg = solver.SolverConfig(delta=0.25, dv=1.0 / 32.0)
        fol = solver.continue_foliation(data, cfg, v_end=2.0)
        for i in range(0, fol.n_levels, 9):
            met = fol.metric(i)
            assert abs(mean(fol.logOmega_field(i), met)) < 1e-11

    def test_breakdown_on_short_slab(self):
        data = geodesic.gen_minkowski(s_star=1.2, Lmax=8, n_s=24)
        cfg = solver.SolverConfig(delta=0.25, dv=1.0 / 32.0)
        with pytest.raises(BreakdownError) as err:
            solver.continue_foliation(data, cfg, v_end=2.0)
        assert abs(err.value.last_good_v - 1.2) < 0.1

    def test_threads_give_identical_results(self, mms_small):
        data, _ = mms_small
        f1 = solver.continue_foliation(
            data, solver.SolverConfig(delta=0.25, dv=1.0 / 16.0, threads=1),
            v_end=1.5)
        f2 = solver.continue_foliation(
            data, solver.SolverConfig(delta=0.25, dv=1.0 / 16.0, threads=4),
            v_end=1.5)
        assert np.array_equal(f1.s, f2.s)
        assert np.array_equal(f1.logOmega, f2.logOmega)


class TestFoliationIO:
    def test_save_load_roundtrip(self, mink, tmp_path):
        cfg = solver.SolverConfig(delta=0.5, dv=1.0 / 16.0)
        fol = solver.continue_foliation(mink, cfg, v_end=2.0)
        fol.save(tmp_path / "fol")
        back = solver.Foliation.load(tmp_path / "fol", mink)
        assert np.array_equal(fol.s, back.s)
        assert np.array_equal(fol.logOmega, back.logOmega)
        assert np.array_equal(fol.v_nodes, back.v_nodes)

    def test_trace_csv(self, mink, tmp_path):
        cfg = solver.SolverConfig(delta=0.5, dv=1.0 / 16.0)
        fol = solver.continue_foliation(mink, cfg, v_end=2.0)
        path = tmp_path / "trace.csv"
        fol.write_trace_csv(path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "window,n,M_n,Delta_n,kappa"
        assert len(lines) > 2


class TestBuildingBlocks:
    def test_induced_metric_composition(self, mink):
        """psi(w) = psi'(s(w), w) = log s(w) pointwise on the flat cone."""
        g = mink.grid
        met = solver.induced_metric(mink, np.full(g.shape, 1.5))
        assert np.max(np.abs(np.real(met.psi.samples) - np.log(1.5))) < 1e-12
        y20 = np.zeros((9, 17), dtype=complex)
        y20[2, 8] = 1.0
        prof = np.real(SpinField.from_coeffs(g, 0, y20).samples)
        s = 1.5 + 0.01 * prof
        met2 = solver.induced_metric(mink, s)
        assert np.max(np.abs(np.real(met2.psi.samples) - np.log(s))) < 1e-12

    def test_assemble_F_minkowski_flat_graph(self, mink):
        """Angularly constant graphs feed zero gradients: F vanishes."""
        g = mink.grid
        s = np.full(g.shape, 1.3)
        met = solver.induced_metric(mink, s)
        sf = SpinField.from_samples(g, 0, s)
        F = solver.assemble_F(mink, s, met, grad(sf, met), hessian(sf, met))
        assert F.max_abs() < 1e-12

    def test_assemble_F_schwarzschild_constant_height(self, schw):
        """At s = 1.5 with no tilt, F reduces to rho'(1.5) = -2M/1.5^3."""
        g = schw.grid
        s = np.full(g.shape, 1.5)
        met = solver.induced_metric(schw, s)
        sf = SpinField.from_samples(g, 0, s)
        F = solver.assemble_F(schw, s, met, grad(sf, met), hessian(sf, met))
        expect = -2.0 * 0.1 / 1.5 ** 3
        assert np.max(np.abs(np.real(F.samples) - expect)) < 1e-12

    def test_assemble_F_matches_direct_source(self, schw):
        """Decisive check of the derived F'_3, F'_4 coefficient tensors:

        on a tilted graph over curved data, the tabulated assembly must match
        the directly reconstructed source -Div zeta + rho - chihat.chibhat/2
        computed through the comparison formulas.
        """
        from nullfoliate import comparison
        from nullfoliate.tensors import div, dot
        g = schw.grid
        y21 = np.zeros((9, 17), dtype=complex)
        y21[2, 8 + 1] = 0.04
        y21[2, 8 - 1] = -np.conj(0.04)
        prof = np.real(SpinField.from_coeffs(g, 0, y21).samples)
        s = 1.6 + prof
        met = solver.induced_metric(schw, s)
        sf = SpinField.from_samples(g, 0, s)
        F = solver.assemble_F(schw, s, met, grad(sf, met), hessian(sf, met))

        logom = SpinField.zero(g, 0)  # source assembly is lapse-independent
        chi, chib, zeta, etab, ups, _ = comparison.canonical_connection(
            schw, sf, logom, met)
        _, _, rho, _, _ = comparison.canonical_curvature(schw, sf, met)
        direct = -1.0 * div(zeta, met) + rho \
            - 0.5 * dot(chi.hat(), chib.hat())
        assert (F - direct).max_abs() < 1e-9

    def test_solve_lapse_examples(self, mink):
        """Constant F gives log Omega = 0; eigenfunction sources invert on
        the unit and radius-2 round spheres."""
        from nullfoliate.tensors import MetricRep
        g = mink.grid
        met1 = MetricRep.round_sphere(g, 1.0)
        out = solver.solve_lapse(met1, SpinField.constant(g, 3.1))
        assert out.max_abs() < 1e-12
        y20c = np.zeros((9, 17), dtype=complex)
        y20c[2, 8] = 1.0
        y20 = SpinField.from_coeffs(g, 0, y20c)
        out = solver.solve_lapse(met1, -6.0 * y20)
        assert np.max(np.abs(out.coeffs - y20.coeffs)) < 1e-12
        met2 = MetricRep.round_sphere(g, 2.0)
        out = solver.solve_lapse(met2, -1.5 * y20)
        assert np.max(np.abs(out.coeffs - y20.coeffs)) < 1e-12


class TestMonitors:
    def test_order_five_monitoring_flag(self, mink):
        """The diagnostic flag widens the monitor to five derivatives without
        changing the accepted fixed point."""
        base = solver.SolverConfig(delta=0.5, dv=1.0 / 16.0, tol=1e-12)
        full = solver.SolverConfig(delta=0.5, dv=1.0 / 16.0, tol=1e-12,
                                   full_monitors=True)
        w1 = solver.picard_window(mink, 1.0, np.ones(mink.grid.shape), base)
        w2 = solver.picard_window(mink, 1.0, np.ones(mink.grid.shape), full)
        assert full.effective_monitor_order == 5
        s1 = np.stack([np.real(st.s.samples) for st in w1.states])
        s2 = np.stack([np.real(st.s.samples) for st in w2.states])
        # the wider monitor may take one extra sweep; both are converged
        assert np.max(np.abs(s1 - s2)) < 1e-12
