# dynamics/integrators.py
"""
Exponential time-marchers for  u_t = eps * u_xx + N(u)  on the periodic grid.

The stiff part is diagonal in Fourier space and is propagated exactly by the
heat gain exp(-eps xi^2 dt); only N is treated explicitly, so dt is bounded by
the nonlinearity alone:  dt * max|xi| <= stability_limit.

Registered schemes:
  - etd_rk2 : Cox-Matthews exponential time differencing, second order.
  - ifrk4   : integrating-factor (Lawson) Runge-Kutta, fourth order.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Callable, Dict, Type

import numpy as np

from spectral.errors import StabilityError
from spectral.grid import SpectralGrid

logger = logging.getLogger(__name__)

RealRhs = Callable[[np.ndarray], np.ndarray]

# Contour points for the phi-function averages.
NUM_CONTOUR_POINTS = 32


def phi_functions(z: np.ndarray, num_points: int = NUM_CONTOUR_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """
    phi1(z) = (e^z - 1)/z and phi2(z) = (e^z - 1 - z)/z^2, evaluated as means over
    a unit circle around each z so the removable singularity at 0 costs no accuracy.
    """
    roots = np.exp(1j * np.pi * (np.arange(num_points) + 0.5) / num_points)
    w = z[:, None] + roots[None, :]
    ew = np.exp(w)
    phi1 = ((ew - 1.0) / w).mean(axis=1).real
    phi2 = ((ew - 1.0 - w) / w ** 2).mean(axis=1).real
    return phi1, phi2


class Stepper(ABC):
    """Base class: owns the precomputed gains for one (grid, eps, dt)."""

    name = "base"
    order = 0
    stability_limit = 0.0

    def __init__(self, grid: SpectralGrid, eps: float, dt: float, rhs: RealRhs):
        self.grid = grid
        self.eps = eps
        self.dt = dt
        self.rhs = rhs
        self.linear = -eps * grid.wavenumbers ** 2
        self.exp_full = np.exp(dt * self.linear)
        self.exp_half = np.exp(0.5 * dt * self.linear)

    def _fft(self, values: np.ndarray) -> np.ndarray:
        return self.grid._fft(values)

    def _ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return self.grid.to_real(self.grid._ifft(coeffs))

    def _n_hat(self, values: np.ndarray) -> np.ndarray:
        return self._fft(self.rhs(values))

    @abstractmethod
    def advance(self, values: np.ndarray) -> np.ndarray:
        """One step of length dt on raw (3, M) values."""


class EtdRk2Stepper(Stepper):
    name = "etd_rk2"
    order = 2
    stability_limit = 1.0

    def __init__(self, grid: SpectralGrid, eps: float, dt: float, rhs: RealRhs):
        super().__init__(grid, eps, dt, rhs)
        phi1, phi2 = phi_functions(dt * self.linear)
        self.coeff_1 = dt * phi1
        self.coeff_2 = dt * phi2

    def advance(self, values: np.ndarray) -> np.ndarray:
        u_hat = self._fft(values)
        n0 = self._n_hat(values)
        a_hat = self.exp_full * u_hat + self.coeff_1 * n0
        n1 = self._n_hat(self._ifft(a_hat))
        return self._ifft(a_hat + self.coeff_2 * (n1 - n0))


class IfRk4Stepper(Stepper):
    name = "ifrk4"
    order = 4
    stability_limit = 2.5

    def advance(self, values: np.ndarray) -> np.ndarray:
        dt = self.dt
        e_half, e_full = self.exp_half, self.exp_full
        u_hat = self._fft(values)
        k1 = self._n_hat(values)
        k2 = self._n_hat(self._ifft(e_half * (u_hat + 0.5 * dt * k1)))
        k3 = self._n_hat(self._ifft(e_half * u_hat + 0.5 * dt * k2))
        k4 = self._n_hat(self._ifft(e_full * u_hat + dt * e_half * k3))
        out = e_full * u_hat + (dt / 6.0) * (e_full * k1 + 2.0 * e_half * (k2 + k3) + k4)
        return self._ifft(out)


# ---------- Registry ----------
INTEGRATOR_REGISTRY: Dict[str, Type[Stepper]] = {
    "etd_rk2": EtdRk2Stepper,
    "ifrk4": IfRk4Stepper,
}


def get_integrator(name: str) -> Type[Stepper]:
    if name not in INTEGRATOR_REGISTRY:
        raise KeyError(f"Unknown integrator {name!r}; choose from {sorted(INTEGRATOR_REGISTRY)}")
    return INTEGRATOR_REGISTRY[name]


def check_stability(grid: SpectralGrid, dt: float, integrator: str) -> float:
    """Return the CFL-like number dt*max|xi|; raise if it leaves the scheme's region."""
    scheme = get_integrator(integrator)
    number = dt * grid.max_wavenumber
    if number > scheme.stability_limit:
        raise StabilityError(
            f"dt*max|xi| = {number:.3g} exceeds the {integrator} stability limit {scheme.stability_limit} "
            f"(dt={dt}, max|xi|={grid.max_wavenumber:.4g})"
        )
    return number
