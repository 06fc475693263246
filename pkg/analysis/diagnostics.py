# analysis/diagnostics.py
"""
Measurable reports on a Trajectory: energies, the maximum principle for
v = |u|^2, the energy and v-equation identities, far-field decay,
Littlewood-Paley tails and the quarter-Laplacian commutator.

All functions are pure in the trajectory; `run_diagnostics` fans the
per-time series out over a thread pool.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Dict, Iterable, Optional, Sequence, TypedDict

import numpy as np
import pandas as pd

from dynamics.solver import nonlinearity_values
from spectral.fields import Trajectory, VectorField3, cross, l2_norm
from spectral.grid import SpectralGrid
from spectral.multipliers import MultiplierSpec, apply_multiplier, quarter_laplacian

logger = logging.getLogger(__name__)

MONOTONE_TOL = 1e-8           # per-step E_c increase allowed, times (1 + E_c(0))
MAX_PRINCIPLE_BASE_TOL = 1e-6
MAX_PRINCIPLE_DT_COEFF = 10.0  # tol_mp = 1e-6 + 10 * dt^2
H12_UNIFORM_TOL = 1e-6
TAIL_REL_TOL = 1e-12


# ---------- 1) Spectral helpers on whole trajectories ----------
def _coefficients(traj: Trajectory) -> np.ndarray:
    """Normalized coefficients, shape (n_times, 3, M)."""
    return traj.grid.forward(traj.data)


def _weighted_sq_sum(grid: SpectralGrid, coeffs: np.ndarray, s: float) -> np.ndarray:
    """L * sum_k |xi_k|^{2s} |c_k|^2 per leading index."""
    weight = np.abs(grid.wavenumbers) ** (2.0 * s)
    return grid.box_length * np.sum(weight * np.abs(coeffs) ** 2, axis=(-2, -1))


def _apply_gain(grid: SpectralGrid, coeffs: np.ndarray, table: np.ndarray) -> np.ndarray:
    return grid.inverse(coeffs * table)


def _require_slices(traj: Trajectory, minimum: int = 3) -> None:
    if len(traj) < minimum:
        raise ValueError(f"Need at least {minimum} stored slices, trajectory has {len(traj)}")


def _require_config(traj: Trajectory):
    if traj.config is None:
        raise ValueError("Trajectory carries no SolverConfig; identity residuals need eps and the nonlinearity")
    return traj.config


def _inner(grid: SpectralGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Space integral of a . b per leading index."""
    return grid.spacing * np.sum(a * b, axis=(-2, -1))


def _centered_rate(series: np.ndarray, spacing: float) -> np.ndarray:
    return (series[2:] - series[:-2]) / (2.0 * spacing)


def observed_orders(errors: Sequence[float]) -> list[float]:
    """log2 of successive error ratios for a dt, dt/2, dt/4, ... refinement."""
    errors = np.asarray(errors, dtype=np.float64)
    return [float(np.log2(errors[j] / errors[j + 1])) for j in range(errors.size - 1)]


# ---------- 2) Energies ----------
def energy_h1(traj: Trajectory) -> np.ndarray:
    """E(t) = 1/2 ||u_x||^2."""
    return 0.5 * _weighted_sq_sum(traj.grid, _coefficients(traj), 1.0)


def critical_energy(traj: Trajectory) -> np.ndarray:
    """E_c(t) = 1/2 ||(-Delta)^{1/4} u||^2."""
    return 0.5 * _weighted_sq_sum(traj.grid, _coefficients(traj), 0.5)


class MonotonicityReport(TypedDict):
    max_violation: float
    tolerance: float
    strictly_decreasing: bool
    passed: bool


def critical_energy_report(traj: Trajectory) -> MonotonicityReport:
    ec = critical_energy(traj)
    jumps = np.diff(ec)
    tol = MONOTONE_TOL * (1.0 + ec[0])
    worst = float(np.max(jumps)) if jumps.size else 0.0
    return MonotonicityReport(
        max_violation=max(worst, 0.0),
        tolerance=tol,
        strictly_decreasing=bool(jumps.size and np.all(jumps < 0)),
        passed=worst <= tol,
    )


def critical_energy_rate(traj: Trajectory) -> np.ndarray:
    """
    d/dt E_c = -eps ||(-Delta)^{3/4} u||^2 + lam * int ((u.h)^2 - |u|^2 |h|^2),  h = (-Delta)^{1/2} u.
    """
    cfg = _require_config(traj)
    grid = traj.grid
    coeffs = _coefficients(traj)
    rate = -cfg.eps * _weighted_sq_sum(grid, coeffs, 1.5)
    if cfg.gilbert_damping:
        h = _apply_gain(grid, coeffs, np.abs(grid.wavenumbers))
        u = traj.data
        uh = np.sum(u * h, axis=1)
        damping = grid.spacing * np.sum(uh ** 2 - np.sum(u * u, axis=1) * np.sum(h * h, axis=1), axis=-1)
        rate = rate + cfg.gilbert_damping * damping
    return rate


def critical_energy_rate_residual(traj: Trajectory) -> np.ndarray:
    """|centered dE_c/dt - predicted rate| / (1 + |rate|) at interior slices."""
    _require_slices(traj)
    rate = critical_energy_rate(traj)[1:-1]
    fd = _centered_rate(critical_energy(traj), traj.stride)
    return np.abs(fd - rate) / (1.0 + np.abs(rate))


def h12_uniform_bound(traj: Trajectory) -> Dict[str, float | bool]:
    norms = np.sqrt(2.0 * critical_energy(traj))
    bound = norms[0] * (1.0 + H12_UNIFORM_TOL)
    return {"sup": float(np.max(norms)), "initial": float(norms[0]), "passed": bool(np.max(norms) <= bound + 1e-300)}


def gronwall_rate(traj: Trajectory) -> float:
    """Fitted exponential rate r of E(t) ~ C e^{r t}; 0 for an energy-free trajectory."""
    energy = energy_h1(traj)
    if len(traj) < 2 or np.max(energy) <= 0:
        return 0.0
    return float(np.polyfit(traj.times, np.log(np.maximum(energy, 1e-300)), 1)[0])


# ---------- 3) Identity residuals ----------
def energy_identity_residual(traj: Trajectory) -> np.ndarray:
    """
    Residual of  d/dt 1/2||u_x||^2 = -eps ||u_xx||^2 - int N(u) . u_xx
    at interior slices, normalized by 1 + |RHS|.
    """
    _require_slices(traj)
    cfg = _require_config(traj)
    grid = traj.grid
    coeffs = _coefficients(traj)[1:-1]
    lap = _apply_gain(grid, coeffs, -grid.wavenumbers ** 2)
    torque = np.stack([nonlinearity_values(grid, u, cfg.gilbert_damping, cfg.dealias) for u in traj.data[1:-1]])
    rhs = -cfg.eps * _inner(grid, lap, lap) - _inner(grid, torque, lap)
    lhs = _centered_rate(energy_h1(traj), traj.stride)
    return np.abs(lhs - rhs) / (1.0 + np.abs(rhs))


def _v_terms(traj: Trajectory) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(centered dv/dt, eps * v_xx, 2 eps |u_x|^2) at interior slices, each (n-2, M)."""
    cfg = _require_config(traj)
    grid = traj.grid
    v = np.sum(traj.data ** 2, axis=1)
    dv = _centered_rate(v, traj.stride)
    lap_v = grid.inverse(grid.forward(v[1:-1]) * (-grid.wavenumbers ** 2))
    du = _apply_gain(grid, _coefficients(traj)[1:-1], 1j * _odd_derivative(grid))
    source = 2.0 * cfg.eps * np.sum(du ** 2, axis=1)
    return dv, cfg.eps * lap_v, source


def _odd_derivative(grid: SpectralGrid) -> np.ndarray:
    xi = np.array(grid.wavenumbers)
    xi[grid.nyquist_index] = 0.0
    return xi


def constraint_equation_residual(traj: Trajectory, include_source: bool = True) -> np.ndarray:
    """
    sup_x | v_t - eps v_xx + 2 eps |u_x|^2 | per interior slice, v = |u|^2,
    normalized by 1 + sup_x |v_t|. With include_source=False the source term is dropped.
    """
    _require_slices(traj)
    dv, diffusion, source = _v_terms(traj)
    residual = dv - diffusion + (source if include_source else 0.0)
    scale = 1.0 + np.max(np.abs(dv), axis=-1)
    return np.max(np.abs(residual), axis=-1) / scale


def constraint_source_magnitude(traj: Trajectory) -> np.ndarray:
    """sup_x 2 eps |u_x|^2 with the same normalization as constraint_equation_residual."""
    _require_slices(traj)
    dv, _, source = _v_terms(traj)
    return np.max(source, axis=-1) / (1.0 + np.max(np.abs(dv), axis=-1))


# ---------- 4) Maximum principle ----------
class MaxPrincipleReport(TypedDict):
    max_v: float
    argmax_time: float
    argmax_x: float
    tolerance: float
    max_deficit: float
    strict_where_gradient: bool
    passed: bool


def max_principle_tolerance(dt: float) -> float:
    return MAX_PRINCIPLE_BASE_TOL + MAX_PRINCIPLE_DT_COEFF * dt ** 2


def max_principle_report(traj: Trajectory) -> MaxPrincipleReport:
    """max_{t,x} |u|^2 against 1 + tol_mp, with the location of the maximum."""
    grid = traj.grid
    v = np.sum(traj.data ** 2, axis=1)
    j, i = np.unravel_index(int(np.argmax(v)), v.shape)
    dt = traj.config.dt if traj.config is not None else traj.stride
    tol = max_principle_tolerance(dt)
    final = traj.final
    du = apply_multiplier(grid, MultiplierSpec.derivative(), final).values
    grad_sq = np.sum(du ** 2, axis=0)
    active = grad_sq > 1e-3 * max(float(np.max(grad_sq)), 1e-300)
    strict = bool(len(traj) == 1 or not np.any(active) or np.all(v[-1][active] < 1.0))
    report = MaxPrincipleReport(
        max_v=float(v[j, i]),
        argmax_time=float(traj.times[j]),
        argmax_x=float(grid.x[i]),
        tolerance=tol,
        max_deficit=float(1.0 - np.min(v)),
        strict_where_gradient=strict,
        passed=bool(v[j, i] <= 1.0 + tol),
    )
    logger.debug(f"[DIAG] max_principle max_v={report['max_v']:.12g} tol={tol:.3g}")
    return report


def parabolic_boundary_report(traj: Trajectory, half_width: float, center: float = 0.0) -> Dict[str, float | bool]:
    """
    Windowed maximum principle on [0, T] x (center - R, center + R): the maximum of v over
    the slab should be attained on its parabolic boundary (initial slice plus the two walls).
    """
    grid = traj.grid
    if not 0 < half_width < grid.half_width:
        raise ValueError(f"window half-width {half_width} must lie in (0, {grid.half_width})")
    v = np.sum(traj.data ** 2, axis=1)
    dist = np.abs(grid.x - center)
    inside = dist < half_width
    walls = np.zeros_like(inside)
    if np.any(~inside):
        edge = np.min(dist[~inside])
        walls = np.isclose(dist, edge)
    if not np.any(inside):
        raise ValueError("window contains no grid points")
    slab_max = float(np.max(v[:, inside | walls]))
    boundary_max = float(max(np.max(v[0, inside | walls]), np.max(v[:, walls]) if np.any(walls) else -np.inf))
    dt = traj.config.dt if traj.config is not None else traj.stride
    tol = max_principle_tolerance(dt)
    return {
        "slab_max": slab_max,
        "boundary_max": boundary_max,
        "tolerance": tol,
        "passed": slab_max <= boundary_max + tol,
    }


# ---------- 5) Far field ----------
def far_field_report(traj: Trajectory, q: Sequence[float], radius: float, center: float = 0.0) -> np.ndarray:
    """sup_{|x - center| > R} |u(t, x) - Q| per stored time."""
    grid = traj.grid
    if not 0 < radius < grid.half_width:
        raise ValueError(f"far-field radius {radius} must lie in (0, box half-width {grid.half_width})")
    mask = np.abs(grid.x - center) > radius
    if not np.any(mask):
        raise ValueError(f"no grid points beyond radius {radius}")
    q = np.asarray(q, dtype=np.float64).reshape(1, 3, 1)
    diff = traj.data[:, :, mask] - q
    return np.max(np.sqrt(np.sum(diff ** 2, axis=1)), axis=-1)


def far_field_envelope(
    traj: Trajectory,
    q: Sequence[float],
    radius: float,
    center: float = 0.0,
    factors: Sequence[float] = (1.0, 1.5, 2.0),
) -> pd.DataFrame:
    rows = {f"far_field_R{factor:g}[1]": far_field_report(traj, q, factor * radius, center) for factor in factors}
    return pd.DataFrame({"time[t]": traj.times, **rows})


# ---------- 6) Littlewood-Paley tails and commutators ----------
def tail_norm(traj: Trajectory, cutoffs: Iterable[float]) -> pd.DataFrame:
    """||P_{>=N} u(t)||_{L^2} against N^{-1/2} ||u(t)||_{H^{1/2}}, per time and N."""
    grid = traj.grid
    coeffs = _coefficients(traj)
    h12 = np.sqrt(_weighted_sq_sum(grid, coeffs, 0.5))
    frames = []
    for cutoff in cutoffs:
        grid.check_cutoff(cutoff)
        high = (np.abs(grid.wavenumbers) >= cutoff).astype(np.float64)
        tail = np.sqrt(grid.box_length * np.sum(high * np.abs(coeffs) ** 2, axis=(-2, -1)))
        bound = h12 / np.sqrt(cutoff)
        frames.append(
            pd.DataFrame(
                {
                    "time[t]": traj.times,
                    "N[1/L]": float(cutoff),
                    "tail[1]": tail,
                    "bound[1]": bound,
                    "slack[1]": bound - tail,
                    "violated": tail > bound * (1.0 + TAIL_REL_TOL),
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def commutator_norm(u: VectorField3, phi: VectorField3) -> float:
    """|| (-Delta)^{1/4}(u x phi) - ((-Delta)^{1/4} u) x phi ||_{L^2}"""
    u.grid.require_same(phi.grid)
    q = quarter_laplacian()
    first = apply_multiplier(u.grid, q, cross(u, phi))
    second = cross(apply_multiplier(u.grid, q, u), phi)
    return l2_norm(first - second)


def commutator_decay(u: VectorField3, phi: VectorField3, cutoffs: Sequence[float]) -> tuple[float, pd.DataFrame]:
    """Log-log slope of commutator_norm(P_{>=N} u, phi) against N."""
    values = [commutator_norm(apply_multiplier(u.grid, MultiplierSpec.lp_high(n), u), phi) for n in cutoffs]
    table = pd.DataFrame({"N[1/L]": [float(n) for n in cutoffs], "commutator[1]": values})
    positive = table["commutator[1]"] > 0
    if positive.sum() < 2:
        return float("-inf"), table
    slope = np.polyfit(np.log(table.loc[positive, "N[1/L]"]), np.log(table.loc[positive, "commutator[1]"]), 1)[0]
    return float(slope), table


def time_regularity(traj: Trajectory, cutoff: float) -> Dict[str, float]:
    """||P_{<N} u_t||_{L^2_{t,x}} and ||u_t||_{L^2_{t,x}} from forward differences on the stride."""
    _require_slices(traj, minimum=2)
    grid = traj.grid
    rate_coeffs = grid.forward(np.diff(traj.data, axis=0) / traj.stride)
    low = (np.abs(grid.wavenumbers) < cutoff).astype(np.float64)
    grid.check_cutoff(cutoff)
    per_time_low = grid.box_length * np.sum(low * np.abs(rate_coeffs) ** 2, axis=(-2, -1))
    per_time_full = grid.box_length * np.sum(np.abs(rate_coeffs) ** 2, axis=(-2, -1))
    return {
        "low[1/t]": float(np.sqrt(traj.stride * np.sum(per_time_low))),
        "full[1/t]": float(np.sqrt(traj.stride * np.sum(per_time_full))),
    }


# ---------- 7) Series registry + fan-out ----------
def _sphere_dev_series(traj: Trajectory) -> np.ndarray:
    return np.max(np.abs(np.sum(traj.data ** 2, axis=1) - 1.0), axis=-1)


DIAGNOSTIC_REGISTRY: Dict[str, Callable[..., np.ndarray]] = {
    "e_h1[1/L]": lambda traj, **_: energy_h1(traj),
    "e_c[1]": lambda traj, **_: critical_energy(traj),
    "sphere_dev[1]": lambda traj, **_: _sphere_dev_series(traj),
    "far_field[1]": lambda traj, q, radius, center, **_: far_field_report(traj, q, radius, center),
}


def run_diagnostics(
    traj: Trajectory,
    q: Sequence[float],
    radius: float,
    cutoffs: Sequence[float] = (),
    center: float = 0.0,
    max_workers: Optional[int] = None,
) -> pd.DataFrame:
    """DiagnosticsSeries as one DataFrame; one registered diagnostic per worker."""
    kwargs = {"q": q, "radius": radius, "center": center}
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {name: pool.submit(fn, traj, **kwargs) for name, fn in DIAGNOSTIC_REGISTRY.items()}
        tails = pool.submit(tail_norm, traj, cutoffs) if cutoffs else None
        columns = {name: fut.result() for name, fut in futures.items()}
        tail_table = tails.result() if tails is not None else None
    frame = pd.DataFrame({"time[t]": traj.times, **columns})
    if tail_table is not None:
        for cutoff, group in tail_table.groupby("N[1/L]", sort=True):
            frame[f"tail_N{cutoff:g}[1]"] = group["tail[1]"].to_numpy()
    logger.info(f"[DIAG] series rows={len(frame)} cols={len(frame.columns)}")
    return frame
