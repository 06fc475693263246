# dynamics/solver.py
"""
Regularized half-wave flow

    u_t - eps * u_xx = N(u),   N(u) = u x (-Delta)^{1/2} u  [+ lam * u x (u x (-Delta)^{1/2} u)]

integrated two independent ways:
  - `evolve`: exponential time-marcher (etd_rk2 / ifrk4) for long runs;
  - `picard_local_solve`: fixed-point iteration of the Duhamel map on a short window,
    with trapezoid quadrature of the heat-propagated nonlinearity.
"""
from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List

import numpy as np

from dynamics.integrators import INTEGRATOR_REGISTRY, Stepper, check_stability, get_integrator
from spectral.errors import BlowUpError, ConfigError, PicardContractionError
from spectral.fields import (
    Trajectory,
    VectorField3,
    _dealiased_product,
    _cross_values,
    hs_norm,
    linf_norm,
    project_to_sphere,
)
from spectral.grid import SpectralGrid
from spectral.multipliers import MultiplierSpec, filter_values, half_laplacian

logger = logging.getLogger(__name__)


# ---------- 1) Configuration ----------
@dataclass(frozen=True)
class PicardSettings:
    max_iters: int = 50
    window: float = 1e-2          # T_loc
    substeps: int = 16            # Duhamel quadrature intervals
    tolerance: float = 1e-11      # on the discrete X_T distance

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError(f"picard max_iters must be >= 1, got {self.max_iters}", key="max_iters")
        if not self.window > 0:
            raise ConfigError(f"picard window must be positive, got {self.window}", key="window")
        if self.substeps < 8:
            raise ConfigError(f"picard substeps must be >= 8, got {self.substeps}", key="substeps")
        if not self.tolerance > 0:
            raise ConfigError(f"picard tolerance must be positive, got {self.tolerance}", key="tolerance")


@dataclass(frozen=True)
class SolverConfig:
    eps: float
    final_time: float
    dt: float
    grid: SpectralGrid
    output_stride: int = 10
    integrator: str = "etd_rk2"
    picard: PicardSettings = field(default_factory=PicardSettings)
    project_to_sphere: bool = False
    gilbert_damping: float = 0.0
    dealias: bool = False
    blowup_threshold: float = 1e6

    def __post_init__(self):
        if not (np.isfinite(self.eps) and self.eps > 0):
            raise ConfigError(f"eps must be positive, got {self.eps}", key="eps")
        if not (np.isfinite(self.final_time) and self.final_time > 0):
            raise ConfigError(f"final_time must be positive, got {self.final_time}", key="final_time")
        if not (self.dt > 0 and self.dt <= self.final_time):
            raise ConfigError(f"dt must satisfy 0 < dt <= T, got dt={self.dt}, T={self.final_time}", key="dt")
        steps = self.final_time / self.dt
        if abs(steps - round(steps)) > 1e-9 * max(steps, 1.0):
            raise ConfigError(f"T/dt = {steps:.12g} is not an integer number of steps", key="dt")
        if int(self.output_stride) != self.output_stride or self.output_stride < 1:
            raise ConfigError(f"output_stride must be a positive integer, got {self.output_stride}", key="output_stride")
        if round(steps) % self.output_stride:
            raise ConfigError(
                f"output_stride {self.output_stride} does not divide the {round(steps)} steps", key="output_stride"
            )
        if self.integrator not in INTEGRATOR_REGISTRY:
            raise ConfigError(f"Unknown integrator {self.integrator!r}", key="integrator")
        if not self.gilbert_damping >= 0:
            raise ConfigError(f"gilbert_damping must be >= 0, got {self.gilbert_damping}", key="gilbert_damping")

    @property
    def num_steps(self) -> int:
        return int(round(self.final_time / self.dt))

    @property
    def output_dt(self) -> float:
        return self.output_stride * self.dt

    def replace(self, **changes) -> "SolverConfig":
        return dataclasses.replace(self, **changes)

    def check_stability(self) -> float:
        return check_stability(self.grid, self.dt, self.integrator)


# ---------- 2) Nonlinearity ----------
def nonlinearity_values(
    grid: SpectralGrid,
    values: np.ndarray,
    gilbert_damping: float = 0.0,
    dealias: bool = False,
) -> np.ndarray:
    """N(u) on raw (3, M) arrays."""
    h = filter_values(grid, half_laplacian(), values)
    if dealias:
        torque = _dealiased_product(grid, values, h, _cross_values)
    else:
        torque = _cross_values(values, h)
    if gilbert_damping:
        torque = torque + gilbert_damping * _cross_values(values, torque)
    return torque


def nonlinearity(u: VectorField3, gilbert_damping: float = 0.0, dealias: bool = False) -> VectorField3:
    """u x (-Delta)^{1/2} u, plus the damping term when gilbert_damping > 0."""
    return VectorField3(u.grid, nonlinearity_values(u.grid, u.values, gilbert_damping, dealias))


def _rhs_for(cfg: SolverConfig):
    def rhs(values: np.ndarray) -> np.ndarray:
        return nonlinearity_values(cfg.grid, values, cfg.gilbert_damping, cfg.dealias)

    return rhs


@lru_cache(maxsize=32)
def _stepper_for(cfg: SolverConfig) -> Stepper:
    cfg.check_stability()
    scheme = get_integrator(cfg.integrator)
    return scheme(cfg.grid, cfg.eps, cfg.dt, _rhs_for(cfg))


def _check_finite(values: np.ndarray, t: float, previous: np.ndarray, threshold: float) -> None:
    finite = np.all(np.isfinite(values))
    if not finite or np.max(np.abs(values)) > threshold:
        last = float(np.sqrt(np.max(np.einsum("im,im->m", previous, previous))))
        logger.error(f"[SOLVER] blow-up t={t:.6g} last_sup={last:.6g} finite={finite}")
        raise BlowUpError(time=t, norm=last)


# ---------- 3) Time marching ----------
def step(u: VectorField3, cfg: SolverConfig) -> VectorField3:
    """One step of the configured exponential integrator."""
    cfg.grid.require_same(u.grid)
    stepper = _stepper_for(cfg)
    out = stepper.advance(u.values)
    _check_finite(out, cfg.dt, u.values, cfg.blowup_threshold)
    if cfg.project_to_sphere:
        out = project_to_sphere(out)
    return VectorField3(u.grid, out)


def evolve(u0: VectorField3, cfg: SolverConfig) -> Trajectory:
    """Integrate to cfg.final_time, storing every output_stride-th step."""
    cfg.grid.require_same(u0.grid)
    stepper = _stepper_for(cfg)
    n_out = cfg.num_steps // cfg.output_stride
    data = np.empty((n_out + 1, 3, cfg.grid.num_points))
    data[0] = u0.values
    values = np.array(u0.values)
    logger.info(
        f"[SOLVER] evolve eps={cfg.eps:g} T={cfg.final_time:g} dt={cfg.dt:g} steps={cfg.num_steps} "
        f"scheme={cfg.integrator} M={cfg.grid.num_points} projected={cfg.project_to_sphere}"
    )
    for n in range(1, cfg.num_steps + 1):
        new = stepper.advance(values)
        _check_finite(new, n * cfg.dt, values, cfg.blowup_threshold)
        if cfg.project_to_sphere:
            new = project_to_sphere(new)
        values = new
        if n % cfg.output_stride == 0:
            data[n // cfg.output_stride] = values
    times = np.arange(n_out + 1) * cfg.output_dt
    return Trajectory(times=times, data=data, grid=cfg.grid, config=cfg)


# ---------- 4) Picard / Duhamel ----------
@dataclass
class PicardReport:
    iterates_kept: int
    xT_differences: List[float]
    contraction_ratios: List[float]
    converged: bool
    window: float
    initial_sup_norm: float = 0.0
    initial_h1_norm: float = 0.0
    heat_sup_norm: float = 0.0
    heat_h1_norm: float = 0.0

    @property
    def geometric_ratio(self) -> float:
        """Geometric mean of the contraction ratios (0 when there are none)."""
        ratios = [r for r in self.contraction_ratios if r > 0]
        if not ratios:
            return 0.0
        return float(np.exp(np.mean(np.log(ratios))))

    @property
    def heat_bounds_hold(self) -> bool:
        """The zeroth iterate never exceeds the data in L^inf or H^1."""
        return (
            self.heat_sup_norm <= self.initial_sup_norm * (1.0 + 1e-12)
            and self.heat_h1_norm <= self.initial_h1_norm * (1.0 + 1e-12)
        )

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        out["geometric_ratio"] = self.geometric_ratio
        out["heat_bounds_hold"] = self.heat_bounds_hold
        return out


def _xt_distance(grid: SpectralGrid, a: np.ndarray, b: np.ndarray) -> float:
    """Discrete X_T distance: sup_t ||.||_inf + sup_t ||.||_{H^1} over the node stack."""
    diff = a - b
    sup = float(np.max(np.sqrt(np.einsum("tim,tim->tm", diff, diff))))
    coeffs = grid.forward(diff)
    h1 = np.sqrt(grid.box_length * np.sum(grid.wavenumbers ** 2 * np.abs(coeffs) ** 2, axis=(1, 2)))
    return sup + float(np.max(h1))


def _duhamel_weights(num_nodes: int) -> np.ndarray:
    """Trapezoid weights w[m, i] for the integral over [0, s_m] on nodes 0..m."""
    w = np.zeros((num_nodes, num_nodes))
    for m in range(1, num_nodes):
        w[m, : m + 1] = 1.0
        w[m, 0] = w[m, m] = 0.5
    return w


def picard_local_solve(u0: VectorField3, cfg: SolverConfig) -> tuple[VectorField3, PicardReport]:
    """
    Iterate u^(j)(s) = K(s) * u0 + int_0^s K(s - r) * N(u^(j-1)(r)) dr on the window [0, T_loc],
    starting from the heat flow of the data. Returns the fixed point at T_loc.
    """
    settings = cfg.picard
    grid = cfg.grid
    grid.require_same(u0.grid)
    if settings.window > cfg.final_time:
        raise ConfigError(f"picard window {settings.window} exceeds T={cfg.final_time}", key="window")

    q = settings.substeps
    tau = settings.window / q
    nodes = np.arange(q + 1) * tau
    # heat gains K(s_m - s_i) for every ordered node pair, shape (q+1, q+1, M)
    lag = np.clip(nodes[:, None] - nodes[None, :], 0.0, None)
    kernel = np.exp(-cfg.eps * lag[:, :, None] * grid.wavenumbers[None, None, :] ** 2)
    weights = tau * _duhamel_weights(q + 1)
    data_hat = grid._fft(u0.values)
    homogeneous_hat = kernel[:, 0, None, :] * data_hat[None, :, :]
    homogeneous = grid.to_real(grid._ifft(homogeneous_hat))

    report = PicardReport(
        iterates_kept=1,
        xT_differences=[],
        contraction_ratios=[],
        converged=False,
        window=settings.window,
        initial_sup_norm=linf_norm(u0),
        initial_h1_norm=hs_norm(u0, 1.0),
        heat_sup_norm=float(np.max(np.sqrt(np.einsum("tim,tim->tm", homogeneous, homogeneous)))),
        heat_h1_norm=max(hs_norm(VectorField3(grid, s), 1.0) for s in homogeneous),
    )

    current = homogeneous
    for it in range(1, settings.max_iters + 1):
        n_hat = grid._fft(np.stack([nonlinearity_values(grid, s, cfg.gilbert_damping, cfg.dealias) for s in current]))
        # integral_hat[m] = sum_i w[m, i] K(s_m - s_i) N_hat[i]
        integral_hat = np.einsum("mi,mik,ijk->mjk", weights, kernel, n_hat)
        new = grid.to_real(grid._ifft(homogeneous_hat + integral_hat))
        distance = _xt_distance(grid, new, current)
        report.xT_differences.append(distance)
        report.iterates_kept = it + 1
        if not np.isfinite(distance):
            raise PicardContractionError(report.contraction_ratios, settings.window)
        if len(report.xT_differences) > 1 and report.xT_differences[-2] > 0:
            report.contraction_ratios.append(distance / report.xT_differences[-2])
        current = new
        logger.debug(f"[PICARD] iter={it} dist={distance:.3e}")
        if distance <= settings.tolerance:
            report.converged = True
            break
        recent = report.contraction_ratios[-2:]
        if len(recent) == 2 and min(recent) >= 1.0:
            logger.error(f"[PICARD] non-contraction window={settings.window:g} ratios={recent}")
            raise PicardContractionError(report.contraction_ratios, settings.window)

    if not report.converged:
        raise PicardContractionError(report.contraction_ratios, settings.window)
    logger.info(
        f"[PICARD] converged iters={report.iterates_kept - 1} window={settings.window:g} "
        f"ratio={report.geometric_ratio:.3g}"
    )
    return VectorField3(grid, current[-1]), report


def picard_ratio_trend(u0: VectorField3, cfg: SolverConfig, halvings: int = 3) -> list[tuple[float, float]]:
    """(T_loc, geometric ratio) for T_loc, T_loc/2, ... ; ratios should shrink with the window."""
    rows = []
    window = cfg.picard.window
    for _ in range(halvings + 1):
        sub = cfg.replace(picard=dataclasses.replace(cfg.picard, window=window))
        _, report = picard_local_solve(u0, sub)
        rows.append((window, report.geometric_ratio))
        window *= 0.5
    return rows


def matched_evolve_config(cfg: SolverConfig) -> SolverConfig:
    """Time-marcher config on the Picard window with dt = T_loc / substeps, for cross-validation."""
    window = cfg.picard.window
    return cfg.replace(final_time=window, dt=window / cfg.picard.substeps, output_stride=cfg.picard.substeps)


def heat_flow(u0: VectorField3, eps: float, t: float) -> VectorField3:
    """K_eps(t) * u0."""
    return VectorField3(u0.grid, filter_values(u0.grid, MultiplierSpec.heat(eps, t), u0.values))


__all__ = [
    "PicardSettings",
    "SolverConfig",
    "PicardReport",
    "nonlinearity",
    "nonlinearity_values",
    "step",
    "evolve",
    "picard_local_solve",
    "picard_ratio_trend",
    "matched_evolve_config",
    "heat_flow",
]
