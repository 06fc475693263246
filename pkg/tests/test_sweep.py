"""Tests for the vanishing-viscosity sweep, its Cauchy trend and the limit verdict."""

from pathlib import Path

import numpy as np
import pytest

from analysis.sweep import (
    SweepPlan,
    SweepReport,
    SweepWindow,
    cauchy_differences,
    certify_limit,
    default_ladder,
    domain_doubling_study,
    run_viscosity_sweep,
    sphere_envelope,
    time_regularity_table,
)
from dynamics.initial_data import InitialDataSpec
from dynamics.solver import SolverConfig
from lab_io.config import parse_config
from spectral.errors import ConfigError, SweepAbortedError
from spectral.grid import SpectralGrid


@pytest.fixture(scope="module")
def coarse():
    return SpectralGrid(16.0, 64)


@pytest.fixture(scope="module")
def base(coarse):
    return SolverConfig(eps=0.1, final_time=0.04, dt=1e-3, grid=coarse, output_stride=1)


@pytest.fixture(scope="module")
def constant_data():
    return InitialDataSpec(family="constant", far_field=(0.0, 0.6, 0.8))


@pytest.fixture(scope="module")
def constant_sweep(base, constant_data):
    return run_viscosity_sweep(SweepPlan(base=base, data=constant_data), max_workers=2)


@pytest.fixture(scope="module")
def bump_sweep(base):
    return run_viscosity_sweep(SweepPlan(base=base, data=InitialDataSpec(family="geodesic_bump")), max_workers=2)


class TestSweepPlan:
    """Startup validation of the ladder, cutoffs and windows."""

    def test_default_ladder(self):
        assert default_ladder() == pytest.approx((0.1, 0.05, 0.025, 0.0125))

    def test_too_few_rungs(self, base, constant_data):
        with pytest.raises(ConfigError) as excinfo:
            SweepPlan(base=base, data=constant_data, eps_ladder=(0.1, 0.05, 0.025))
        assert excinfo.value.key == "eps_ladder"

    def test_ladder_must_decrease(self, base, constant_data):
        with pytest.raises(ConfigError):
            SweepPlan(base=base, data=constant_data, eps_ladder=(0.1, 0.05, 0.05, 0.01))

    def test_cutoff_count(self, base, constant_data):
        with pytest.raises(ConfigError) as excinfo:
            SweepPlan(base=base, data=constant_data, cutoffs=(4.0, 8.0))
        assert excinfo.value.key == "cutoffs"

    def test_cutoff_above_nyquist(self, base, constant_data):
        with pytest.raises(ConfigError):
            SweepPlan(base=base, data=constant_data, cutoffs=(10.0, 20.0, 20.0, 20.0))

    def test_windows_nested(self, base, constant_data):
        with pytest.raises(ConfigError) as excinfo:
            SweepPlan(base=base, data=constant_data, windows=((0.04, 4.0), (0.02, 8.0)))
        assert excinfo.value.key == "windows"

    def test_window_inside_box(self, base, constant_data):
        with pytest.raises(ConfigError):
            SweepPlan(base=base, data=constant_data, windows=((0.04, 9.0),))

    def test_paired_cutoffs_capped_at_nyquist(self, base, constant_data, coarse):
        """N_j = 1/eps_j until the grid runs out of modes."""
        plan = SweepPlan(base=base, data=constant_data)
        assert plan.paired_cutoffs == pytest.approx((10.0, coarse.nyquist, coarse.nyquist, coarse.nyquist))

    def test_rung_config(self, base, constant_data):
        plan = SweepPlan(base=base, data=constant_data, rung_overrides={2: {"project_to_sphere": True}})
        assert plan.rung_config(3).eps == pytest.approx(0.0125)
        assert plan.rung_config(2).project_to_sphere
        assert not plan.rung_config(1).project_to_sphere


class TestConstantSweep:
    """Constant data is a fixed point at every eps."""

    def test_every_window_trivially_convergent(self, constant_sweep):
        trend = cauchy_differences(constant_sweep)
        assert {w["status"] for w in trend["windows"].values()} == {"trivially_convergent"}
        assert trend["window_monotone"]

    def test_certified(self, constant_sweep):
        verdict = certify_limit(constant_sweep)
        assert verdict["passed"], verdict["reasons"]
        assert verdict["battery_passes"] == 27
        assert constant_sweep.verdict is verdict

    def test_domain_doubling(self, base, constant_data):
        result = domain_doubling_study(SweepPlan(base=base, data=constant_data))
        assert result["eps"] == pytest.approx(0.0125)
        assert result["l2_tx_difference"] <= 1e-13


class TestMixedFamilies:
    """Rungs must solve the same equation up to eps."""

    def test_projected_rung_rejected(self, base, constant_data):
        plan = SweepPlan(base=base, data=constant_data, rung_overrides={1: {"project_to_sphere": True}})
        verdict = certify_limit(run_viscosity_sweep(plan, max_workers=2))
        assert not verdict["passed"]
        assert "inconsistent flow family" in verdict["reasons"]
        assert not verdict["criteria"]["flow_family"]


class TestAbortedSweep:
    """A rung that blows up aborts the sweep with the finished rungs attached."""

    def test_partial_report(self, base, constant_data):
        plan = SweepPlan(base=base, data=constant_data, rung_overrides={2: {"blowup_threshold": 0.5}})
        with pytest.raises(SweepAbortedError) as excinfo:
            run_viscosity_sweep(plan, max_workers=2)
        partial = excinfo.value.partial_report
        assert not partial.complete
        assert [r.index for r in partial.rungs] == [0, 1, 3]

    def test_trend_needs_three_pairs(self, constant_sweep):
        short = SweepReport(plan=constant_sweep.plan, rungs=constant_sweep.rungs[:3])
        with pytest.raises(ValueError):
            cauchy_differences(short)


class TestBumpSweep:
    """Geodesic bump on a coarse grid."""

    def test_tables(self, bump_sweep):
        assert len(bump_sweep.summary_table()) == 4
        assert len(bump_sweep.cauchy) == 9
        assert len(bump_sweep.battery_table()) == 4 * 27
        np.testing.assert_allclose(bump_sweep.eps, [0.1, 0.05, 0.025, 0.0125])

    def test_nested_windows_and_tails(self, bump_sweep):
        """Larger windows never see smaller differences; tails obey the H^1/2 bound."""
        trend = cauchy_differences(bump_sweep)
        assert trend["window_monotone"]
        assert trend["tail_bounds_ok"]
        assert set(trend["windows"]) == {0, 1, 2}

    def test_verdict_never_raises(self, bump_sweep):
        verdict = certify_limit(bump_sweep)
        assert isinstance(verdict["passed"], bool)
        assert set(verdict["criteria"]) == {"cauchy", "battery", "sphere", "flow_family"}

    def test_time_regularity_sorted(self, bump_sweep):
        trajectories = [r.trajectory for r in reversed(bump_sweep.rungs)]
        table = time_regularity_table(trajectories, 4.0)
        assert list(table["eps[1]"]) == pytest.approx([0.1, 0.05, 0.025, 0.0125])
        assert (table["low_over_full[1]"] <= 1.0 + 1e-12).all()


class TestSphereEnvelope:
    """Affine envelope of the sphere certificate."""

    def test_dominates_every_rung(self):
        eps = np.array([0.1, 0.05, 0.025, 0.0125])
        certificate = np.array([3e-3, 1.2e-3, 8e-4, 2e-4])
        envelope = sphere_envelope(eps, certificate)
        assert np.all(envelope["intercept"] + envelope["slope"] * eps >= certificate - 1e-15)

    def test_exact_line(self):
        eps = np.array([0.1, 0.05, 0.025, 0.0125])
        envelope = sphere_envelope(eps, 0.02 * eps)
        assert envelope["slope"] == pytest.approx(0.02)
        assert envelope["intercept"] == pytest.approx(0.0, abs=1e-15)


def test_window_tuple():
    assert SweepWindow(0.1, 2.0).half_width == 2.0


@pytest.fixture(scope="module")
def acceptance_sweep():
    """The configs/sweep_acceptance.toml ladder: twisted bump on 1024 points."""
    cfg = parse_config(Path(__file__).resolve().parents[1] / "configs" / "sweep_acceptance.toml")
    return run_viscosity_sweep(cfg.sweep_plan(), max_workers=4)


class TestAcceptanceSweep:
    """A resolved twisted-bump ladder certifies its eps -> 0 candidate."""

    def test_certified(self, acceptance_sweep):
        verdict = certify_limit(acceptance_sweep)
        assert verdict["passed"] is True, verdict["reasons"]
        assert verdict["battery_passes"] >= acceptance_sweep.plan.min_battery_passes
        assert all(verdict["criteria"].values())

    def test_halfwave_residual_falls_along_ladder(self, acceptance_sweep):
        """Per test function, the eps = 0 residual shrinks rung by rung."""
        table = acceptance_sweep.battery_table()
        per_phi = table.pivot(index="phi_index", columns="rung", values="halfwave[1]").sort_index(axis=1)
        assert list(per_phi.columns) == [0, 1, 2, 3]
        values = per_phi.to_numpy()
        falling = np.all(values[:, 1:] <= values[:, :-1] * (1 + 1e-12) + 1e-13, axis=1)
        assert int(falling.sum()) >= 24
        assert int(falling.sum()) == certify_limit(acceptance_sweep)["battery_passes"]
