# dynamics/initial_data.py
"""
Admissible initial maps u0: smooth, sphere-valued, and exactly equal to the
far-field value Q outside a compact interval [x0 - R0, x0 + R0].
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Tuple, TypedDict

import numpy as np
from numpy.polynomial import Polynomial

from spectral.errors import ConfigError
from spectral.fields import VectorField3, hs_norm, sphere_deviation, unit_vector
from spectral.grid import SpectralGrid

logger = logging.getLogger(__name__)

SPHERE_TOL = 1e-12
FAR_FIELD_TOL = 1e-12
MIN_DECAY_RATE = 4.0


# ---------- 1) Bump profile ----------
@lru_cache(maxsize=32)
def bump_polynomial(order: int) -> Polynomial:
    """(1 - r^2)^p as an exact polynomial in r; derivatives come from .deriv()."""
    return Polynomial([1.0, 0.0, -1.0]) ** order


def bump_profile(r: np.ndarray, order: int = 8, derivative: int = 0) -> np.ndarray:
    """
    Compactly supported polynomial bump b(r) = (1 - r^2)^p on |r| < 1, zero elsewhere,
    or its `derivative`-th derivative. b has p - 1 continuous derivatives.
    """
    poly = bump_polynomial(order)
    if derivative:
        poly = poly.deriv(derivative)
    r = np.asarray(r, dtype=np.float64)
    inside = np.abs(r) < 1.0
    return np.where(inside, poly(np.where(inside, r, 0.0)), 0.0)


def orthonormal_frame(q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Two unit vectors e1, e2 = q x e1 spanning the plane orthogonal to q."""
    q = unit_vector(q)
    axis = np.zeros(3)
    axis[int(np.argmin(np.abs(q)))] = 1.0
    e1 = axis - np.dot(axis, q) * q
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(q, e1)
    return e1, e2


# ---------- 2) Spec ----------
@dataclass(frozen=True)
class InitialDataSpec:
    family: str = "geodesic_bump"
    far_field: Tuple[float, float, float] = (0.0, 0.0, 1.0)
    amplitude: float = np.pi
    support_radius: float = 1.0
    center: float = 0.0
    bump_order: int = 8
    twist: float = 0.5 * np.pi
    q: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in FAMILY_REGISTRY:
            raise ConfigError(f"Unknown initial-data family {self.family!r}", key="family")
        q = np.asarray(self.far_field, dtype=np.float64)
        if q.shape != (3,) or abs(np.linalg.norm(q) - 1.0) > 1e-14:
            raise ConfigError(f"far_field Q must be a unit 3-vector, got {self.far_field}", key="far_field")
        if not self.support_radius > 0:
            raise ConfigError(f"support_radius must be positive, got {self.support_radius}", key="support_radius")
        if int(self.bump_order) != self.bump_order or self.bump_order < 8:
            raise ConfigError(f"bump_order must be an integer >= 8, got {self.bump_order}", key="bump_order")
        object.__setattr__(self, "far_field", tuple(float(c) for c in q))
        q.flags.writeable = False
        object.__setattr__(self, "q", q)

    def check_fits(self, grid: SpectralGrid) -> None:
        if self.support_radius > grid.box_length / 8.0:
            raise ConfigError(
                f"support_radius {self.support_radius} exceeds the padding limit L/8 = {grid.box_length / 8.0}",
                key="support_radius",
            )
        if abs(self.center) + self.support_radius >= grid.half_width:
            raise ConfigError(f"support around center {self.center} leaves the box", key="center")

    def scaled_coordinate(self, grid: SpectralGrid) -> np.ndarray:
        return (grid.x - self.center) / self.support_radius


# ---------- 3) Families ----------
def _constant(grid: SpectralGrid, spec: InitialDataSpec) -> np.ndarray:
    return np.repeat(spec.q.reshape(3, 1), grid.num_points, axis=1)


def _geodesic_bump(grid: SpectralGrid, spec: InitialDataSpec) -> np.ndarray:
    theta = spec.amplitude * bump_profile(spec.scaled_coordinate(grid), spec.bump_order)
    e1, _ = orthonormal_frame(spec.q)
    return np.cos(theta) * spec.q[:, None] + np.sin(theta) * e1[:, None]


def _twist_bump(grid: SpectralGrid, spec: InitialDataSpec) -> np.ndarray:
    r = spec.scaled_coordinate(grid)
    theta = spec.amplitude * bump_profile(r, spec.bump_order)
    psi = spec.twist * r * bump_profile(r, spec.bump_order)
    e1, e2 = orthonormal_frame(spec.q)
    direction = np.cos(psi) * e1[:, None] + np.sin(psi) * e2[:, None]
    return np.cos(theta) * spec.q[:, None] + np.sin(theta) * direction


FAMILY_REGISTRY: Dict[str, Callable[[SpectralGrid, InitialDataSpec], np.ndarray]] = {
    "geodesic_bump": _geodesic_bump,
    "twist_bump": _twist_bump,
    "constant": _constant,
}


def make_initial(grid: SpectralGrid, spec: InitialDataSpec) -> VectorField3:
    spec.check_fits(grid)
    values = FAMILY_REGISTRY[spec.family](grid, spec)
    logger.debug(f"[DATA] family={spec.family} a={spec.amplitude:.4g} R0={spec.support_radius} M={grid.num_points}")
    return VectorField3(grid, values, sphere_tolerance=SPHERE_TOL)


# ---------- 4) Admissibility ----------
class AdmissibilityReport(TypedDict):
    sphere_deviation: float
    far_field_residue: float
    h1_norm: float
    h12_norm: float
    decay_rate: float
    checks: Dict[str, bool]
    passed: bool


def spectral_decay_rate(u: VectorField3, start_fraction: float = 1.0 / 16.0, floor: float = 1e-13) -> float:
    """
    Fitted exponent p of |u_k| ~ |xi_k|^{-p} over the resolved tail.
    The upper envelope (running max from the tail) is fitted so that
    spectra with vanishing even or odd modes are handled; +inf if the
    spectrum reaches round-off before the fitting window.
    """
    grid = u.grid
    amp = np.max(np.abs(u.coefficients()), axis=0)
    half = grid.num_points // 2
    k = np.arange(1, half)
    positive = np.maximum(amp[1:half], amp[-1:-half:-1])
    envelope = np.maximum.accumulate(positive[::-1])[::-1]
    xi = grid.wavenumbers[1:half]
    top = float(np.max(amp))
    mask = (xi >= start_fraction * grid.nyquist) & (envelope > floor * max(top, 1e-300))
    if np.count_nonzero(mask) < 3:
        return float("inf")
    slope = np.polyfit(np.log(xi[mask]), np.log(envelope[mask]), 1)[0]
    logger.debug(f"[DATA] decay fit over {np.count_nonzero(mask)} modes (k={k[mask][0]}..{k[mask][-1]}) slope={slope:.3f}")
    return float(-slope)


def verify_admissibility(u0: VectorField3, spec: InitialDataSpec) -> AdmissibilityReport:
    grid = u0.grid
    outside = np.abs(grid.x - spec.center) >= spec.support_radius
    residue = u0.values[:, outside] - spec.q[:, None]
    far = float(np.max(np.abs(residue))) if residue.size else 0.0
    report = AdmissibilityReport(
        sphere_deviation=sphere_deviation(u0),
        far_field_residue=far,
        h1_norm=hs_norm(u0, 1.0),
        h12_norm=hs_norm(u0, 0.5),
        decay_rate=spectral_decay_rate(u0),
        checks={},
        passed=False,
    )
    report["checks"] = {
        "sphere": report["sphere_deviation"] <= SPHERE_TOL,
        "far_field": far <= FAR_FIELD_TOL,
        "finite_norms": bool(np.isfinite(report["h1_norm"]) and np.isfinite(report["h12_norm"])),
        "spectral_decay": report["decay_rate"] > MIN_DECAY_RATE,
    }
    report["passed"] = all(report["checks"].values())
    if not report["passed"]:
        failed = [name for name, ok in report["checks"].items() if not ok]
        logger.warning(f"[DATA] admissibility failed checks={failed}")
    return report
