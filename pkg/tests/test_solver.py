"""Tests for the nonlinearity, the exponential time-marchers and the Picard local solver."""

import numpy as np
import pytest

from analysis.diagnostics import observed_orders
from dynamics.initial_data import make_initial
from dynamics.integrators import INTEGRATOR_REGISTRY, Stepper, phi_functions
from dynamics.solver import (
    PicardSettings,
    SolverConfig,
    evolve,
    heat_flow,
    matched_evolve_config,
    nonlinearity,
    picard_local_solve,
    picard_ratio_trend,
    step,
)
from lab_io.selftest import random_sphere_field
from spectral.errors import BlowUpError, ConfigError, PicardContractionError, StabilityError
from spectral.fields import VectorField3, dot, l2_norm, sphere_deviation


def _final(u0, grid, integrator, dt, final_time=0.1, eps=0.1):
    steps = int(round(final_time / dt))
    cfg = SolverConfig(eps=eps, final_time=final_time, dt=dt, grid=grid, output_stride=steps, integrator=integrator)
    return evolve(u0, cfg).final


class TestNonlinearity:
    """N(u) = u x |D| u."""

    def test_constant_gives_zero(self, torus):
        u = VectorField3.constant(torus, (0.0, 0.6, 0.8))
        np.testing.assert_allclose(nonlinearity(u).values, 0.0, atol=1e-12)

    def test_eigenfield_gives_zero(self, torus):
        """|D| (cos x, sin x, 0) = (cos x, sin x, 0)."""
        u = VectorField3.from_components(torus, np.cos(torus.x), np.sin(torus.x), 0.0)
        np.testing.assert_allclose(nonlinearity(u).values, 0.0, atol=1e-12)

    def test_orthogonal_to_u(self, torus, rng):
        for damping in (0.0, 0.3):
            u = random_sphere_field(torus, rng, 20)
            assert np.max(np.abs(dot(u, nonlinearity(u, gilbert_damping=damping)))) <= 1e-12

    def test_matches_direct_summation(self, torus, rng):
        u = random_sphere_field(torus, rng, 20)
        basis = np.exp(-1j * np.outer(torus.wavenumbers, torus.x))
        coeffs = u.values @ basis.T / torus.num_points
        h = ((coeffs * np.abs(torus.wavenumbers)) @ np.conj(basis)).real
        direct = np.cross(u.values, h, axis=0)
        fast = nonlinearity(u).values
        assert np.linalg.norm(fast - direct) <= 1e-10 * max(np.linalg.norm(direct), 1.0)


class TestSolverConfig:
    """Startup validation."""

    @pytest.mark.parametrize(
        "changes, key",
        [
            ({"eps": 0.0}, "eps"),
            ({"eps": -1.0}, "eps"),
            ({"dt": 0.5}, "dt"),
            ({"dt": 3e-3}, "dt"),
            ({"output_stride": 7}, "output_stride"),
            ({"integrator": "euler"}, "integrator"),
        ],
    )
    def test_invalid(self, box, changes, key):
        base = dict(eps=0.1, final_time=0.2, dt=1e-3, grid=box, output_stride=10)
        with pytest.raises(ConfigError) as excinfo:
            SolverConfig(**{**base, **changes})
        assert excinfo.value.key == key

    def test_stability_limit(self, box, bump_spec):
        """dt * max|xi| beyond the scheme's region is refused before stepping."""
        cfg = SolverConfig(eps=0.1, final_time=0.1, dt=0.05, grid=box, output_stride=1)
        with pytest.raises(StabilityError):
            evolve(make_initial(box, bump_spec), cfg)

    def test_picard_settings(self):
        with pytest.raises(ConfigError):
            PicardSettings(substeps=4)


class TestStep:
    """One exponential-integrator step."""

    @pytest.mark.parametrize("integrator", ["etd_rk2", "ifrk4"])
    def test_constant_fixed(self, box, integrator):
        u = VectorField3.constant(box, (0.0, 0.6, 0.8))
        cfg = SolverConfig(eps=0.01, final_time=1e-2, dt=1e-3, grid=box, output_stride=1, integrator=integrator)
        np.testing.assert_allclose(step(u, cfg).values, u.values, atol=1e-14)

    def test_zero_mode_bookkeeping(self, box, twist_spec):
        """N has zero mean (k and -k cancel), so a step leaves the mean of u in place."""
        u = make_initial(box, twist_spec)
        cfg = SolverConfig(eps=1e-2, final_time=1e-3, dt=1e-3, grid=box, output_stride=1)
        out = step(u, cfg)
        np.testing.assert_allclose(np.mean(nonlinearity(u).values, axis=1), 0.0, atol=1e-13)
        np.testing.assert_allclose(np.mean(out.values, axis=1), np.mean(u.values, axis=1), atol=1e-13)

    def test_phi_functions_near_zero(self):
        phi1, phi2 = phi_functions(np.array([0.0, -1e-8, -2.0]))
        assert phi1[0] == pytest.approx(1.0, rel=1e-13)
        assert phi2[0] == pytest.approx(0.5, rel=1e-13)
        assert phi1[2] == pytest.approx((np.exp(-2.0) - 1.0) / -2.0, rel=1e-13)
        assert phi2[2] == pytest.approx((np.exp(-2.0) - 1.0 + 2.0) / 4.0, rel=1e-13)

    def test_stepper_without_advance_refused(self, box):
        class Incomplete(Stepper):
            name = "incomplete"

        with pytest.raises(TypeError):
            Incomplete(box, 0.1, 1e-3, lambda values: values)

    @pytest.mark.parametrize("name", sorted(INTEGRATOR_REGISTRY))
    def test_registered_steppers_instantiate(self, box, name):
        stepper = INTEGRATOR_REGISTRY[name](box, 0.1, 1e-3, lambda values: np.zeros_like(values))
        assert isinstance(stepper, Stepper)

    def test_blow_up_reported(self, box, bump_spec):
        cfg = SolverConfig(eps=0.1, final_time=1e-2, dt=1e-3, grid=box, output_stride=1, blowup_threshold=0.5)
        with pytest.raises(BlowUpError) as excinfo:
            evolve(make_initial(box, bump_spec), cfg)
        assert excinfo.value.time == pytest.approx(1e-3)


class TestEvolve:
    """Time-marching runs."""

    def test_constant_trajectory(self, box):
        u0 = VectorField3.constant(box, (0.0, 0.6, 0.8))
        traj = evolve(u0, SolverConfig(eps=0.1, final_time=0.05, dt=1e-3, grid=box, output_stride=5))
        assert len(traj) == 11
        np.testing.assert_allclose(traj.data, np.repeat(u0.values[None], 11, axis=0), atol=1e-13)

    def test_etd_rk2_second_order(self, box, twist_spec):
        u0 = make_initial(box, twist_spec)
        reference = _final(u0, box, "etd_rk2", 6.25e-5)
        errors = [l2_norm(_final(u0, box, "etd_rk2", dt) - reference) for dt in (2e-3, 1e-3, 5e-4)]
        assert min(observed_orders(errors)) > 1.8

    def test_ifrk4_higher_order(self, box, twist_spec):
        u0 = make_initial(box, twist_spec)
        reference = _final(u0, box, "ifrk4", 2.5e-4)
        errors = [l2_norm(_final(u0, box, "ifrk4", dt) - reference) for dt in (4e-3, 2e-3)]
        assert observed_orders(errors)[0] > 2.5

    def test_resolution_doubling(self, short_run, fine_run):
        """Terminal slices at M and 2M agree on the shared points."""
        diff = short_run.final.values - fine_run.final.values[:, ::2]
        assert np.sqrt(short_run.grid.spacing * np.sum(diff ** 2)) <= 1e-6

    def test_projected_variant_stays_on_sphere(self, box, twist_spec, short_config):
        traj = evolve(make_initial(box, twist_spec), short_config.replace(project_to_sphere=True))
        assert max(sphere_deviation(s) for s in traj) <= 1e-14

    def test_sphere_deviation_below_one(self, short_run):
        """|u|^2 never exceeds 1 beyond round-off."""
        v = np.sum(short_run.data ** 2, axis=1)
        assert np.max(v) <= 1.0 + 1e-6
        assert np.min(v) < 1.0


class TestPicard:
    """Fixed-point iteration of the Duhamel map."""

    def _config(self, grid, window=1e-2, **picard):
        return SolverConfig(
            eps=0.1,
            final_time=0.1,
            dt=1e-3,
            grid=grid,
            output_stride=1,
            picard=PicardSettings(window=window, **picard),
        )

    def test_constant_data(self, box):
        u0 = VectorField3.constant(box, (0.0, 0.0, 1.0))
        fixed, report = picard_local_solve(u0, self._config(box))
        assert report.converged
        assert report.iterates_kept == 2
        assert max(report.xT_differences) <= 1e-13
        np.testing.assert_allclose(fixed.values, u0.values, atol=1e-13)

    def test_geometric_contraction(self, box, bump_spec):
        _, report = picard_local_solve(make_initial(box, bump_spec), self._config(box))
        assert report.converged
        assert all(r < 1.0 for r in report.contraction_ratios)
        assert report.geometric_ratio < 1.0
        assert report.heat_bounds_hold

    def test_agrees_with_time_marcher(self, box, bump_spec):
        u0 = make_initial(box, bump_spec)
        cfg = self._config(box)
        fixed, _ = picard_local_solve(u0, cfg)
        marched = evolve(u0, matched_evolve_config(cfg)).final
        assert l2_norm(fixed - marched) <= 1e-4

    def test_ratio_shrinks_with_window(self, box, bump_spec):
        trend = picard_ratio_trend(make_initial(box, bump_spec), self._config(box), halvings=2)
        ratios = [ratio for _, ratio in trend]
        assert all(b < a for a, b in zip(ratios, ratios[1:]))

    def test_contraction_over_many_iterates(self, box, bump_spec):
        """Differences fall at least geometrically with the worst observed ratio."""
        _, report = picard_local_solve(make_initial(box, bump_spec), self._config(box))
        diffs = np.array(report.xT_differences)
        assert diffs.size >= 5
        assert np.all(np.diff(diffs) < 0)
        worst = max(report.contraction_ratios)
        assert worst < 1.0
        bound = diffs[0] * worst ** np.arange(diffs.size)
        assert np.all(diffs <= bound * (1.0 + 1e-9))
        for window, ratio in picard_ratio_trend(make_initial(box, bump_spec), self._config(box), halvings=2):
            assert ratio < 1.0, window

    def test_unconverged_iteration_raises(self, box, bump_spec):
        with pytest.raises(PicardContractionError):
            picard_local_solve(make_initial(box, bump_spec), self._config(box, max_iters=1))

    def test_window_longer_than_horizon(self, box, bump_spec):
        with pytest.raises(ConfigError):
            picard_local_solve(make_initial(box, bump_spec), self._config(box, window=0.5))

    def test_heat_flow_averages(self, box, bump_spec):
        """K_eps(t) * u0 is a positive average: no growth in L^2 or pointwise length."""
        u0 = make_initial(box, bump_spec)
        flowed = heat_flow(u0, 0.1, 1e-2)
        assert l2_norm(flowed) <= l2_norm(u0)
        assert np.max(np.sum(flowed.values ** 2, axis=0)) <= 1.0 + 1e-12
