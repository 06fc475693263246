# lab_io/selftest.py
"""
Operator property suite behind `lab_cli.py selftest`.

Each registered check takes a seeded Generator and returns (value, tolerance);
the check passes when value <= tolerance. Checks are cheap (M = 256) so the
whole suite runs in seconds.
"""
from __future__ import annotations

import logging
import time
from typing import Callable, Dict, Tuple

import numpy as np
import pandas as pd

from dynamics.solver import SolverConfig, nonlinearity_values, step
from lab_io.snapshots import decode_snapshot, encode_snapshot
from spectral.fields import VectorField3, cross, hs_norm, l2_norm, project_to_sphere
from spectral.grid import SpectralGrid
from spectral.multipliers import (
    MultiplierSpec,
    apply_multiplier,
    compose_check,
    half_laplacian,
    low_high_split,
    quarter_laplacian,
)
from analysis.weak_form import pairing_identity_check

logger = logging.getLogger(__name__)

SELFTEST_GRID = (2.0 * np.pi, 256)
NUM_RANDOM_FIELDS = 100
OPERATOR_TOL = 1e-10


# ---------- 1) Random fields ----------
def random_band_limited(grid: SpectralGrid, rng: np.random.Generator, max_mode: int, decay: float = 1.5) -> VectorField3:
    """Real field with |k| <= max_mode and coefficient amplitudes ~ (1 + |k|)^-decay."""
    k = grid.mode_numbers
    active = (np.abs(k) <= max_mode) & (np.arange(grid.num_points) != grid.nyquist_index)
    amp = np.where(active, (1.0 + np.abs(k)) ** -decay, 0.0)
    coeffs = amp * (rng.standard_normal((3, grid.num_points)) + 1j * rng.standard_normal((3, grid.num_points)))
    # Hermitian symmetry so the field is real
    mirror = (-np.arange(grid.num_points)) % grid.num_points
    coeffs = 0.5 * (coeffs + np.conj(coeffs[:, mirror]))
    return VectorField3(grid, grid.inverse(coeffs))


def random_sphere_field(grid: SpectralGrid, rng: np.random.Generator, max_mode: int) -> VectorField3:
    base = random_band_limited(grid, rng, max_mode)
    return VectorField3(grid, project_to_sphere(base.values + np.array([[0.0], [0.0], [10.0]])))


def _relative(a: float, b: float) -> float:
    return abs(a - b) / max(1.0, abs(a), abs(b))


# ---------- 2) Checks ----------
def _grid() -> SpectralGrid:
    return SpectralGrid(*SELFTEST_GRID)


def check_hilbert_derivative(rng) -> Tuple[float, float]:
    grid = _grid()
    worst = max(compose_check(grid, random_band_limited(grid, rng, 100)) for _ in range(NUM_RANDOM_FIELDS))
    return worst, OPERATOR_TOL


def check_double_quarter(rng) -> Tuple[float, float]:
    grid = _grid()
    q = quarter_laplacian()
    worst = 0.0
    for _ in range(NUM_RANDOM_FIELDS):
        f = random_band_limited(grid, rng, 100)
        twice = apply_multiplier(grid, q, apply_multiplier(grid, q, f))
        once = apply_multiplier(grid, half_laplacian(), f)
        worst = max(worst, l2_norm(twice - once) / max(l2_norm(f), 1e-30))
    return worst, OPERATOR_TOL


def check_round_trip(rng) -> Tuple[float, float]:
    grid = _grid()
    return grid.round_trip_error(random_band_limited(grid, rng, 127).values), 1e-13


def check_plancherel(rng) -> Tuple[float, float]:
    grid = _grid()
    f = random_band_limited(grid, rng, 127)
    return _relative(l2_norm(f), hs_norm(f, 0.0)), 1e-13


def check_self_adjoint(rng) -> Tuple[float, float]:
    grid = _grid()
    f, g = random_band_limited(grid, rng, 100), random_band_limited(grid, rng, 100)
    q = quarter_laplacian()
    left = grid.integrate(np.sum(apply_multiplier(grid, q, f).values * g.values, axis=0))
    right = grid.integrate(np.sum(f.values * apply_multiplier(grid, q, g).values, axis=0))
    return _relative(float(left), float(right)), 1e-12


def check_torque_orthogonal(rng) -> Tuple[float, float]:
    grid = _grid()
    u = random_sphere_field(grid, rng, 20)
    torque = nonlinearity_values(grid, u.values, gilbert_damping=0.1)
    return float(np.max(np.abs(np.sum(u.values * torque, axis=0)))), 1e-12


def check_triple_product(rng) -> Tuple[float, float]:
    grid = _grid()
    a, phi = random_band_limited(grid, rng, 60), random_band_limited(grid, rng, 60)
    return float(np.max(np.abs(np.sum(cross(a, phi).values * a.values, axis=0)))), 1e-13


def check_pairing(rng) -> Tuple[float, float]:
    grid = _grid()
    u, phi = random_band_limited(grid, rng, 60), random_band_limited(grid, rng, 60)
    return pairing_identity_check(u, phi), OPERATOR_TOL


def check_tail_bound(rng) -> Tuple[float, float]:
    """max over N of ||P_{>=N} u|| - N^{-1/2} |u|_{H^1/2}; must not be positive."""
    grid = _grid()
    u = random_band_limited(grid, rng, 120)
    worst = -np.inf
    for n in (8.0, 16.0, 32.0, 64.0):
        _, high = low_high_split(grid, u, n)
        worst = max(worst, l2_norm(high) - hs_norm(u, 0.5) / np.sqrt(n))
    return float(worst), 1e-14


def check_heat_semigroup(rng) -> Tuple[float, float]:
    grid = _grid()
    f = random_band_limited(grid, rng, 100)
    a = apply_multiplier(grid, MultiplierSpec.heat(0.1, 0.3), apply_multiplier(grid, MultiplierSpec.heat(0.1, 0.2), f))
    b = apply_multiplier(grid, MultiplierSpec.heat(0.1, 0.5), f)
    return l2_norm(a - b) / max(l2_norm(f), 1e-30), 1e-13


def check_snapshot_round_trip(rng) -> Tuple[float, float]:
    grid = _grid()
    f = random_band_limited(grid, rng, 127)
    back = decode_snapshot(encode_snapshot(f))
    same = back.grid == grid and np.array_equal(back.values, f.values)
    return (0.0 if same else 1.0), 0.0


def check_constant_step(rng) -> Tuple[float, float]:
    grid = _grid()
    q = rng.standard_normal(3)
    u = VectorField3.constant(grid, q / np.linalg.norm(q))
    cfg = SolverConfig(eps=0.1, final_time=1e-2, dt=1e-3, grid=grid, output_stride=1)
    return float(np.max(np.abs(step(u, cfg).values - u.values))), 1e-13


SELFTEST_REGISTRY: Dict[str, Callable[[np.random.Generator], Tuple[float, float]]] = {
    "hilbert_derivative": check_hilbert_derivative,
    "double_quarter": check_double_quarter,
    "round_trip": check_round_trip,
    "plancherel": check_plancherel,
    "self_adjoint_quarter": check_self_adjoint,
    "torque_orthogonal": check_torque_orthogonal,
    "triple_product": check_triple_product,
    "pairing_identity": check_pairing,
    "tail_bound": check_tail_bound,
    "heat_semigroup": check_heat_semigroup,
    "snapshot_round_trip": check_snapshot_round_trip,
    "constant_step": check_constant_step,
}


def run_selftest(seed: int = 0) -> pd.DataFrame:
    rows = []
    for name, check in SELFTEST_REGISTRY.items():
        rng = np.random.default_rng([seed, len(rows)])
        start = time.perf_counter()
        value, tol = check(rng)
        rows.append(
            {
                "check": name,
                "value[1]": float(value),
                "tolerance[1]": float(tol),
                "passed": bool(value <= tol),
            }
        )
        logger.info(
            f"[CLI] selftest {name} value={value:.3e} tol={tol:.1e} "
            f"passed={rows[-1]['passed']} seconds={time.perf_counter() - start:.2f}"
        )
    return pd.DataFrame(rows)
