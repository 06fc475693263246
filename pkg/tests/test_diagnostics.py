"""Tests for energies, identity residuals, maximum principle, far field, tails and commutators."""

import numpy as np
import pytest

from analysis.diagnostics import (
    commutator_decay,
    commutator_norm,
    constraint_equation_residual,
    constraint_source_magnitude,
    critical_energy,
    critical_energy_rate_residual,
    critical_energy_report,
    energy_h1,
    energy_identity_residual,
    far_field_envelope,
    far_field_report,
    gronwall_rate,
    h12_uniform_bound,
    max_principle_report,
    max_principle_tolerance,
    observed_orders,
    parabolic_boundary_report,
    run_diagnostics,
    tail_norm,
    time_regularity,
)
from dynamics.initial_data import bump_profile, make_initial
from dynamics.solver import SolverConfig, evolve
from lab_io.selftest import random_band_limited
from spectral.fields import Trajectory, VectorField3
from spectral.grid import SpectralGrid


@pytest.fixture(scope="module")
def refined_runs(box, twist_spec):
    """Same flow stored every step at dt and dt/2."""
    u0 = make_initial(box, twist_spec)
    runs = []
    for dt in (2e-3, 1e-3):
        cfg = SolverConfig(eps=0.1, final_time=0.05, dt=dt, grid=box, output_stride=1)
        runs.append(evolve(u0, cfg))
    return runs


def _frozen(grid, values, n=3, stride=0.01):
    return Trajectory(times=np.arange(n) * stride, data=np.repeat(values[None], n, axis=0), grid=grid)


class TestEnergies:
    """E = 1/2 ||u_x||^2 and E_c = 1/2 ||(-Delta)^{1/4} u||^2."""

    def test_constant_has_no_energy(self, constant_run):
        assert np.max(energy_h1(constant_run)) <= 1e-24
        assert np.max(critical_energy(constant_run)) <= 1e-24
        assert gronwall_rate(constant_run) == 0.0

    def test_critical_energy_decreases(self, short_run):
        report = critical_energy_report(short_run)
        assert report["passed"]
        assert report["strictly_decreasing"]
        assert report["max_violation"] == 0.0

    def test_critical_energy_rate(self, refined_runs):
        """Centered dE_c/dt matches -eps ||u||_{H^3/2}^2 at second order in the stride."""
        errors = [np.max(critical_energy_rate_residual(run)) for run in refined_runs]
        assert observed_orders(errors)[0] > 1.7

    def test_half_norm_uniformly_bounded(self, short_run):
        bound = h12_uniform_bound(short_run)
        assert bound["passed"]
        assert bound["sup"] == pytest.approx(bound["initial"], rel=1e-12)

    def test_energy_identity_converges(self, refined_runs):
        errors = [np.max(energy_identity_residual(run)) for run in refined_runs]
        assert observed_orders(errors)[0] > 1.7

    def test_identity_needs_three_slices(self, short_run):
        two = Trajectory(short_run.times[:2], short_run.data[:2], short_run.grid, short_run.config)
        with pytest.raises(ValueError):
            energy_identity_residual(two)

    def test_identity_needs_config(self, torus):
        with pytest.raises(ValueError):
            energy_identity_residual(_frozen(torus, VectorField3.constant(torus, (0.0, 0.0, 1.0)).values))

    def test_gronwall_rate_finite(self, short_run):
        assert np.isfinite(gronwall_rate(short_run))


class TestConstraintEquation:
    """v = |u|^2 solves v_t - eps v_xx = -2 eps |u_x|^2."""

    def test_converges_with_stride(self, refined_runs):
        errors = [np.max(constraint_equation_residual(run)) for run in refined_runs]
        assert observed_orders(errors)[0] > 1.7

    def test_source_term_is_needed(self, refined_runs):
        run = refined_runs[-1]
        with_source = np.max(constraint_equation_residual(run))
        without = np.max(constraint_equation_residual(run, include_source=False))
        assert without > 10.0 * with_source
        assert np.max(constraint_source_magnitude(run)) > 10.0 * with_source

    def test_projected_flow_fails(self, refined_runs, box, twist_spec):
        """Renormalizing every step breaks the v-equation."""
        run = refined_runs[-1]
        projected = evolve(make_initial(box, twist_spec), run.config.replace(project_to_sphere=True))
        assert np.max(constraint_equation_residual(projected)) > 10.0 * np.max(constraint_equation_residual(run))


class TestMaxPrinciple:
    """|u|^2 <= 1 on the whole run."""

    def test_tolerance_formula(self):
        assert max_principle_tolerance(1e-3) == pytest.approx(1e-6 + 1e-5)

    def test_short_run(self, short_run):
        report = max_principle_report(short_run)
        assert report["passed"]
        assert report["max_v"] <= 1.0 + report["tolerance"]
        assert report["max_deficit"] > 0.0
        assert report["strict_where_gradient"]

    def test_constant_run(self, constant_run):
        report = max_principle_report(constant_run)
        assert report["passed"]
        assert report["max_v"] == pytest.approx(1.0, abs=1e-15)

    def test_deficit_shrinks_with_eps(self, box, twist_spec):
        """Less viscosity pulls |u|^2 less far below one."""
        u0 = make_initial(box, twist_spec)
        deficits = []
        for eps in (0.1, 0.05, 0.01):
            cfg = SolverConfig(eps=eps, final_time=0.2, dt=1e-3, grid=box, output_stride=10)
            report = max_principle_report(evolve(u0, cfg))
            assert report["passed"]
            deficits.append(report["max_deficit"])
        assert deficits[0] > deficits[1] > deficits[2] > 0.0

    def test_flags_overshoot(self, torus):
        report = max_principle_report(_frozen(torus, VectorField3.constant(torus, (0.0, 0.0, 1.01)).values))
        assert not report["passed"]

    def test_parabolic_boundary(self, short_run):
        report = parabolic_boundary_report(short_run, 4.0)
        assert report["passed"]

    def test_parabolic_window_must_fit(self, short_run):
        with pytest.raises(ValueError):
            parabolic_boundary_report(short_run, 9.0)


class TestFarField:
    """sup_{|x| > R} |u - Q|."""

    def test_exact_at_time_zero(self, short_run, twist_spec):
        values = far_field_report(short_run, twist_spec.q, twist_spec.support_radius)
        assert values[0] == 0.0
        assert np.all(values[1:] < 1.0)

    def test_envelope_nonincreasing_in_radius(self, short_run, twist_spec):
        table = far_field_envelope(short_run, twist_spec.q, 1.5)
        radii = table.drop(columns="time[t]").to_numpy()
        assert np.all(np.diff(radii, axis=1) <= 0.0)

    def test_radius_must_fit(self, short_run, twist_spec):
        with pytest.raises(ValueError):
            far_field_report(short_run, twist_spec.q, 8.0)


class TestTails:
    """||P_{>=N} u|| against N^{-1/2} ||u||_{H^1/2}."""

    def test_equality_on_single_mode(self, torus):
        values = VectorField3.from_components(torus, np.cos(8.0 * torus.x), 0.0, 0.0).values
        table = tail_norm(_frozen(torus, values), [8.0])
        np.testing.assert_allclose(table["tail[1]"], table["bound[1]"], rtol=1e-12)
        assert not table["violated"].any()

    def test_never_violated_on_run(self, short_run):
        table = tail_norm(short_run, [4.0, 8.0, 16.0, 32.0])
        assert len(table) == 4 * len(short_run)
        assert not table["violated"].any()
        assert (table["slack[1]"] >= -1e-12 * table["bound[1]"]).all()

    def test_time_regularity_split(self, short_run):
        result = time_regularity(short_run, 8.0)
        assert 0.0 < result["low[1/t]"] <= result["full[1/t]"]

    def test_run_diagnostics_columns(self, short_run, twist_spec):
        frame = run_diagnostics(short_run, twist_spec.q, 2.0, cutoffs=[8.0, 16.0], max_workers=2)
        assert len(frame) == len(short_run)
        for column in ("time[t]", "e_h1[1/L]", "e_c[1]", "sphere_dev[1]", "far_field[1]", "tail_N8[1]", "tail_N16[1]"):
            assert column in frame.columns
        np.testing.assert_allclose(frame["e_c[1]"], critical_energy(short_run), rtol=1e-14)


class TestCommutator:
    """(-Delta)^{1/4}(u x phi) - ((-Delta)^{1/4} u) x phi."""

    def test_constant_phi_commutes(self, band_limited, torus):
        u = band_limited()
        phi = VectorField3.constant(torus, (0.3, -0.4, 1.2))
        assert commutator_norm(u, phi) <= 1e-12

    def test_linear_in_phi(self, band_limited, torus):
        u = band_limited()
        phi = VectorField3.from_components(torus, bump_profile(torus.x, 16), 0.0, 0.5 * bump_profile(torus.x, 16))
        assert commutator_norm(u, 2.0 * phi) == pytest.approx(2.0 * commutator_norm(u, phi), rel=1e-12)

    def test_high_frequency_decay(self, rng):
        grid = SpectralGrid(2.0 * np.pi, 512)
        u = random_band_limited(grid, rng, 128)
        phi = VectorField3.from_components(grid, bump_profile(grid.x, 16), 0.0, 0.0)
        slope, table = commutator_decay(u, phi, [8.0, 16.0, 32.0, 64.0])
        assert len(table) == 4
        assert slope <= -0.8
