"""Tests for test functions and the space-time weak residuals."""

import numpy as np
import pytest

from analysis.diagnostics import observed_orders
from analysis.weak_form import (
    TestFunction,
    TestFunctionSum,
    battery_residuals,
    canonical_battery,
    pairing_identity_check,
    pairing_tolerance,
    viscous_term,
    weak_residual_halfwave,
    weak_residual_regularized,
)
from dynamics.initial_data import make_initial
from dynamics.solver import SolverConfig, evolve
from spectral.errors import GridMismatchError, HorizonMismatchError
from spectral.fields import Trajectory, VectorField3
from spectral.grid import SpectralGrid
from spectral.multipliers import MultiplierSpec, filter_values


@pytest.fixture(scope="module")
def dense_constant(box):
    """Constant map stored at 101 times on [0, 0.2]."""
    cfg = SolverConfig(eps=0.1, final_time=0.2, dt=2e-3, grid=box, output_stride=1)
    data = np.repeat(VectorField3.constant(box, (0.0, 0.6, 0.8)).values[None], 101, axis=0)
    return Trajectory(times=np.arange(101) * cfg.output_dt, data=data, grid=box, config=cfg)


@pytest.fixture(scope="module")
def dense_run(box, twist_spec):
    """Twisted bump stored at every step."""
    cfg = SolverConfig(eps=0.1, final_time=0.2, dt=1e-3, grid=box, output_stride=1)
    return evolve(make_initial(box, twist_spec), cfg)


def _phi(grid, horizon, **overrides):
    params = dict(
        grid=grid,
        horizon=horizon,
        center=0.0,
        radius=2.0,
        direction=(1.0, 0.0, 0.0),
        temporal="interior",
        t_center=0.5 * horizon,
        t_radius=0.25 * horizon,
    )
    params.update(overrides)
    return TestFunction(**params)


class TestTestFunction:
    """Analytic derivatives and validation."""

    @pytest.mark.parametrize("temporal, t_center", [("interior", 0.1), ("initial", 0.0)])
    def test_chi_dot_matches_stencil(self, box, temporal, t_center):
        phi = _phi(box, 0.2, temporal=temporal, t_center=t_center, t_radius=0.08)
        t = np.linspace(0.03, 0.15, 9)
        h = 1e-3 * phi.t_radius
        stencil = (phi.chi(t - 2 * h) - 8 * phi.chi(t - h) + 8 * phi.chi(t + h) - phi.chi(t + 2 * h)) / (12 * h)
        np.testing.assert_allclose(phi.chi_dot(t), stencil, rtol=1e-6, atol=1e-6 * np.max(np.abs(stencil)))

    def test_initial_profile_is_a_step(self, box):
        phi = _phi(box, 0.2, temporal="initial", t_center=0.0, t_radius=0.1)
        assert phi.chi(0.0) == pytest.approx(1.0, abs=1e-15)
        assert phi.chi(0.1) == pytest.approx(0.0, abs=1e-15)
        assert phi.chi(0.15) == pytest.approx(0.0, abs=1e-15)
        assert phi.chi_dot(0.0) == pytest.approx(0.0, abs=1e-12)

    def test_psi_xx_matches_spectral_derivative(self, box):
        phi = _phi(box, 0.2, center=1.0, radius=2.0, direction=(0.0, 0.6, 0.8))
        dx = MultiplierSpec.derivative()
        spectral = filter_values(box, dx, filter_values(box, dx, phi.psi()))
        np.testing.assert_allclose(phi.psi_xx(), spectral, atol=1e-7 * np.max(np.abs(phi.psi_xx())))

    def test_support_inside_horizon(self, box):
        with pytest.raises(ValueError):
            _phi(box, 0.2, t_center=0.05, t_radius=0.08)
        with pytest.raises(ValueError):
            _phi(box, 0.2, temporal="initial", t_radius=0.2)

    def test_support_inside_box(self, box):
        with pytest.raises(ValueError):
            _phi(box, 0.2, center=7.0, radius=2.0)

    def test_unknown_temporal_kind(self, box):
        with pytest.raises(ValueError):
            _phi(box, 0.2, temporal="final")

    def test_canonical_battery(self, box):
        battery = canonical_battery(box, 0.2)
        assert len(battery) == 27
        assert len({phi.label for phi in battery}) == 27
        assert sum(phi.temporal == "initial" for phi in battery) == 9


class TestWeakResiduals:
    """Residuals of the regularized and half-wave weak forms."""

    def test_constant_map_is_weak_solution(self, dense_constant):
        table = battery_residuals(dense_constant)
        assert table["regularized[1]"].max() <= 1e-9
        assert table["halfwave[1]"].max() <= 1e-9

    def test_zero_direction(self, dense_run):
        phi = _phi(dense_run.grid, dense_run.final_time, direction=(0.0, 0.0, 0.0))
        assert weak_residual_regularized(dense_run, phi) == 0.0
        assert weak_residual_halfwave(dense_run, phi) == 0.0

    def test_forms_differ_by_viscous_term(self, dense_run):
        for phi in canonical_battery(dense_run.grid, dense_run.final_time)[::5]:
            gap = weak_residual_halfwave(dense_run, phi, signed=True) - weak_residual_regularized(dense_run, phi, signed=True)
            assert gap == pytest.approx(viscous_term(dense_run, phi), rel=1e-9, abs=1e-14)

    def test_linear_in_test_function(self, dense_run):
        battery = canonical_battery(dense_run.grid, dense_run.final_time)
        first, second = battery[1], battery[13]
        combined = first + second
        assert isinstance(combined, TestFunctionSum)
        expected = weak_residual_regularized(dense_run, first, signed=True) + weak_residual_regularized(
            dense_run, second, signed=True
        )
        assert weak_residual_regularized(dense_run, combined, signed=True) == pytest.approx(expected, rel=1e-9, abs=1e-14)

    def test_regularized_residual_small_on_run(self, dense_run):
        """The computed flow satisfies its own weak form far better than the eps = 0 form."""
        table = battery_residuals(dense_run, max_workers=4)
        assert len(table) == 27
        assert list(table.columns) == ["phi_index", "label", "regularized[1]", "halfwave[1]", "viscous[1]"]
        assert table["regularized[1]"].max() <= 1e-2 * table["viscous[1]"].abs().max()

    def test_regularized_residual_second_order_in_dt(self, dense_run, box, twist_spec):
        """Halving dt cuts the regularized residual by about four."""
        coarse_cfg = dense_run.config.replace(dt=2e-3)
        coarse = evolve(make_initial(box, twist_spec), coarse_cfg)
        errors = [battery_residuals(run, max_workers=4)["regularized[1]"].max() for run in (coarse, dense_run)]
        assert errors[1] < errors[0]
        assert 1.6 < observed_orders(errors)[0] < 2.6

    def test_horizon_mismatch(self, dense_run):
        phi = _phi(dense_run.grid, 0.4)
        with pytest.raises(HorizonMismatchError):
            weak_residual_regularized(dense_run, phi)

    def test_grid_mismatch(self, dense_run):
        phi = _phi(SpectralGrid(16.0, 128), dense_run.final_time)
        with pytest.raises(GridMismatchError):
            weak_residual_halfwave(dense_run, phi)


class TestPairingIdentity:
    """int (phi x u) . |D| u = int |D|^{1/2}(phi x u) . |D|^{1/2} u."""

    def test_on_run_slices(self, short_run):
        phi = _phi(short_run.grid, short_run.final_time, direction=(0.0, 1.0, 0.0))
        piece = phi.slice(0.5 * short_run.final_time)
        for u in list(short_run)[::5]:
            assert pairing_identity_check(u, piece) <= pairing_tolerance(u, piece)

    def test_on_random_fields(self, torus, band_limited):
        u, phi = band_limited(), band_limited()
        assert pairing_identity_check(u, phi) <= pairing_tolerance(u, phi)
