# analysis/weak_form.py
"""
Space-time weak-formulation residuals against tensor-product test functions
phi(t, x) = chi(t) * psi(x) * d, with psi and chi polynomial bumps whose
derivatives are known exactly.

Sign conventions (from u_t = eps u_xx + u x |D| u, paired with phi):

    lhs        = - int int u . phi_t  -  int u0 . phi(0)
    viscous    = eps * int int u . phi_xx
    nonlinear  = int int |D|^{1/2}(phi x u) . |D|^{1/2} u

    regularized residual = lhs - viscous - nonlinear
    half-wave residual   = lhs - nonlinear

Space integrals are trapezoid sums on the grid, time integrals the composite
trapezoid on the trajectory's stored stride.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from dynamics.initial_data import bump_polynomial, bump_profile
from spectral.errors import HorizonMismatchError
from spectral.fields import Trajectory, VectorField3, _cross_values, l2_norm
from spectral.grid import SpectralGrid
from spectral.multipliers import filter_values, half_laplacian, quarter_laplacian

logger = logging.getLogger(__name__)

TEST_BUMP_ORDER = 16
HORIZON_RTOL = 1e-12
PAIRING_TOL = 1e-10
TEMPORAL_KINDS = ("interior", "initial")

# (phi_values, phi_t_values, phi_xx_values), each (n_times, 3, M)
Samples = Tuple[np.ndarray, np.ndarray, np.ndarray]


# ---------- 1) Test functions ----------
@lru_cache(maxsize=8)
def _step_polynomial(order: int):
    """Antiderivative B of the bump and its total mass Z = B(1) - B(-1)."""
    antiderivative = bump_polynomial(order).integ()
    return antiderivative, float(antiderivative(1.0) - antiderivative(-1.0))


@dataclass(frozen=True, eq=False)
class TestFunction:
    """
    Spatial bump psi(x) = b((x - center)/radius) times a fixed direction, temporal bump:
      - "interior": chi(t) = b((t - t_center)/t_radius), support inside (0, horizon);
      - "initial":  smooth step from chi(0) = 1 down to 0 at t_radius, whose derivative is
                  the bump b rescaled to (0, t_radius), so chi is flat at t = 0.
    """

    __test__ = False  # not a pytest class

    grid: SpectralGrid
    horizon: float
    center: float
    radius: float
    direction: Tuple[float, float, float]
    temporal: str = "interior"
    t_center: float = 0.0
    t_radius: float = 0.0
    order: int = TEST_BUMP_ORDER
    label: str = ""

    def __post_init__(self):
        if self.temporal not in TEMPORAL_KINDS:
            raise ValueError(f"temporal kind must be one of {TEMPORAL_KINDS}, got {self.temporal!r}")
        if not self.radius > 0 or abs(self.center) + self.radius >= self.grid.half_width:
            raise ValueError(f"spatial support [{self.center} +- {self.radius}] must sit strictly inside the box")
        if not self.t_radius > 0:
            raise ValueError(f"t_radius must be positive, got {self.t_radius}")
        if self.temporal == "interior":
            if self.t_center - self.t_radius <= 0 or self.t_center + self.t_radius >= self.horizon:
                raise ValueError("interior temporal support must lie strictly inside (0, horizon)")
        elif self.t_radius >= self.horizon:
            raise ValueError("initial temporal support must end before the horizon")
        object.__setattr__(self, "direction", tuple(float(c) for c in self.direction))

    @property
    def _d(self) -> np.ndarray:
        return np.asarray(self.direction).reshape(3, 1)

    def _s(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=np.float64)
        if self.temporal == "interior":
            return (t - self.t_center) / self.t_radius
        return 2.0 * t / self.t_radius - 1.0

    def chi(self, t) -> np.ndarray:
        s = self._s(t)
        if self.temporal == "interior":
            return bump_profile(s, self.order)
        antiderivative, total = _step_polynomial(self.order)
        inside = np.clip(s, -1.0, 1.0)
        return 1.0 - (antiderivative(inside) - antiderivative(-1.0)) / total

    def chi_dot(self, t) -> np.ndarray:
        s = self._s(t)
        if self.temporal == "interior":
            return bump_profile(s, self.order, derivative=1) / self.t_radius
        _, total = _step_polynomial(self.order)
        return -2.0 * bump_profile(s, self.order) / (total * self.t_radius)

    def psi(self) -> np.ndarray:
        """(3, M) spatial profile."""
        r = (self.grid.x - self.center) / self.radius
        return self._d * bump_profile(r, self.order)[None, :]

    def psi_xx(self) -> np.ndarray:
        r = (self.grid.x - self.center) / self.radius
        return self._d * (bump_profile(r, self.order, derivative=2) / self.radius ** 2)[None, :]

    def slice(self, t: float) -> VectorField3:
        return VectorField3(self.grid, float(self.chi(t)) * self.psi())

    def sample(self, times: np.ndarray) -> Samples:
        chi, chi_t = self.chi(times), self.chi_dot(times)
        psi, psi_xx = self.psi(), self.psi_xx()
        return (
            chi[:, None, None] * psi[None],
            chi_t[:, None, None] * psi[None],
            chi[:, None, None] * psi_xx[None],
        )

    def __add__(self, other) -> "TestFunctionSum":
        return TestFunctionSum([self]) + other


@dataclass(frozen=True, eq=False)
class TestFunctionSum:
    """Finite sum of test functions; residuals are linear in it."""

    __test__ = False

    terms: List[TestFunction]

    @property
    def grid(self) -> SpectralGrid:
        return self.terms[0].grid

    @property
    def horizon(self) -> float:
        return self.terms[0].horizon

    def sample(self, times: np.ndarray) -> Samples:
        parts = [term.sample(times) for term in self.terms]
        return tuple(sum(p[i] for p in parts) for i in range(3))

    def __add__(self, other) -> "TestFunctionSum":
        extra = other.terms if isinstance(other, TestFunctionSum) else [other]
        return TestFunctionSum(list(self.terms) + list(extra))


def canonical_battery(grid: SpectralGrid, horizon: float, order: int = TEST_BUMP_ORDER) -> List[TestFunction]:
    """3 spatial bumps x 3 temporal bumps x 3 axis directions = 27 test functions."""
    L, T = grid.box_length, horizon
    spatial = [(0.0, L / 8.0), (-L / 16.0, L / 12.0), (L / 16.0, L / 12.0)]
    temporal = [("interior", T / 2.0, T / 4.0), ("interior", T / 3.0, T / 4.0), ("initial", 0.0, T / 2.0)]
    axes = np.eye(3)
    battery = []
    for i, (center, radius) in enumerate(spatial):
        for j, (kind, t_center, t_radius) in enumerate(temporal):
            for k in range(3):
                battery.append(
                    TestFunction(
                        grid=grid,
                        horizon=T,
                        center=center,
                        radius=radius,
                        direction=tuple(axes[k]),
                        temporal=kind,
                        t_center=t_center,
                        t_radius=t_radius,
                        order=order,
                        label=f"s{i}_t{j}_e{'xyz'[k]}",
                    )
                )
    return battery


# ---------- 2) Residual terms ----------
def _check_compatible(traj: Trajectory, phi) -> None:
    traj.grid.require_same(phi.grid, "test function")
    if abs(phi.horizon - traj.final_time) > HORIZON_RTOL * max(1.0, traj.final_time):
        raise HorizonMismatchError(
            f"test function horizon {phi.horizon} does not match trajectory horizon {traj.final_time}"
        )


def _space_inner(grid: SpectralGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """int a . b dx per time, a and b of shape (n, 3, M)."""
    return grid.spacing * np.einsum("nim,nim->n", a, b)


def _half_pairing(grid: SpectralGrid, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """int |D|^{1/2} a . |D|^{1/2} b per time, by Parseval: L * sum |xi| Re(conj(a_k) b_k)."""
    a_hat, b_hat = grid.forward(a), grid.forward(b)
    weight = np.abs(grid.wavenumbers)
    return grid.box_length * np.einsum("k,nik->n", weight, np.real(np.conj(a_hat) * b_hat))


def _terms(traj: Trajectory, phi) -> dict:
    _check_compatible(traj, phi)
    grid = traj.grid
    w = traj.time_weights()
    phi_v, phi_t, phi_xx = phi.sample(traj.times)
    u = traj.data
    initial = grid.spacing * float(np.sum(u[0] * phi_v[0]))
    lhs = -float(w @ _space_inner(grid, u, phi_t)) - initial
    viscous = traj.eps * float(w @ _space_inner(grid, u, phi_xx))
    phi_cross_u = np.cross(phi_v, u, axis=1)
    nonlinear = float(w @ _half_pairing(grid, phi_cross_u, u))
    damping = 0.0
    lam = traj.config.gilbert_damping if traj.config is not None else 0.0
    if lam:
        h = np.stack([filter_values(grid, half_laplacian(), s) for s in u])
        torque = np.cross(u, np.cross(u, h, axis=1), axis=1)
        damping = lam * float(w @ _space_inner(grid, torque, phi_v))
    return {"lhs": lhs, "viscous": viscous, "nonlinear": nonlinear, "damping": damping}


def viscous_term(traj: Trajectory, phi) -> float:
    """eps * int int u . phi_xx"""
    return _terms(traj, phi)["viscous"]


def weak_residual_regularized(traj: Trajectory, phi, signed: bool = False) -> float:
    t = _terms(traj, phi)
    value = t["lhs"] - t["viscous"] - t["nonlinear"] - t["damping"]
    return value if signed else abs(value)


def weak_residual_halfwave(traj: Trajectory, phi, signed: bool = False) -> float:
    t = _terms(traj, phi)
    value = t["lhs"] - t["nonlinear"]
    return value if signed else abs(value)


def pairing_identity_check(u: VectorField3, phi_slice: VectorField3) -> float:
    """
    | int (phi x u) . |D| u  -  int |D|^{1/2}(phi x u) . |D|^{1/2} u |,
    both sides evaluated on the grid in physical space.
    """
    u.grid.require_same(phi_slice.grid, "test slice")
    grid = u.grid
    a = _cross_values(phi_slice.values, u.values)
    left = grid.spacing * float(np.sum(a * filter_values(grid, half_laplacian(), u.values)))
    q = quarter_laplacian()
    right = grid.spacing * float(np.sum(filter_values(grid, q, a) * filter_values(grid, q, u.values)))
    return abs(left - right)


def pairing_tolerance(u: VectorField3, phi_slice: VectorField3) -> float:
    return PAIRING_TOL * (1.0 + l2_norm(u) * l2_norm(phi_slice) * (1.0 + u.grid.max_wavenumber))


# ---------- 3) Battery ----------
def battery_residuals(
    traj: Trajectory,
    battery: Optional[Sequence[TestFunction]] = None,
    max_workers: Optional[int] = None,
) -> pd.DataFrame:
    """One row per test function: regularized and half-wave residuals plus the viscous term."""
    battery = list(battery) if battery is not None else canonical_battery(traj.grid, traj.final_time)

    def evaluate(phi: TestFunction) -> dict:
        t = _terms(traj, phi)
        return {
            "label": phi.label,
            "regularized[1]": abs(t["lhs"] - t["viscous"] - t["nonlinear"] - t["damping"]),
            "halfwave[1]": abs(t["lhs"] - t["nonlinear"]),
            "viscous[1]": t["viscous"],
        }

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        rows = list(pool.map(evaluate, battery))
    frame = pd.DataFrame(rows)
    frame.insert(0, "phi_index", np.arange(len(rows)))
    logger.info(
        f"[WEAK] battery n={len(rows)} eps={traj.eps:g} "
        f"max_regularized={frame['regularized[1]'].max():.3e} max_halfwave={frame['halfwave[1]'].max():.3e}"
    )
    return frame
