# spectral/grid.py
"""
Periodic box geometry, wavenumber table and FFT plumbing.

Layout conventions
------------------
- Collocation points x_j = -L/2 + j*h, j = 0..M-1, h = L/M.
- Wavenumbers are stored in FFT order: xi_k = 2*pi*k/L for
  k = 0, 1, ..., M/2-1, -M/2, ..., -1. The unpaired Nyquist mode is k = -M/2.
- `forward` returns normalized coefficients f_k = (1/L) * integral(f e^{-i xi_k (x - x_0)}),
  realized as fft(f)/M, so that  h * sum f^2 = L * sum |f_k|^2  (Plancherel).
  The phase reference x_0 = -L/2 never matters because every operator in the lab is diagonal.
- Internally `_fft` / `_ifft` are the unnormalized pair; normalization is applied once in `forward`.
- Transforms allocate their outputs and the grid holds no mutable state, so one grid
  serves any number of threads.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft

from spectral.errors import ConfigError, GridMismatchError, SpectralDomainError

logger = logging.getLogger(__name__)

# Relative tolerance used when discarding the imaginary residue of an inverse transform.
REALNESS_TOL = 1e-12


# ---------- 1) Grid ----------
@dataclass(frozen=True)
class SpectralGrid:
    box_length: float
    num_points: int
    x: np.ndarray = field(init=False, repr=False, compare=False)
    wavenumbers: np.ndarray = field(init=False, repr=False, compare=False)
    mode_numbers: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.num_points) != self.num_points or self.num_points % 2 or self.num_points < 8:
            raise ConfigError(f"num_points must be an even integer >= 8, got {self.num_points}", key="num_points")
        if not (np.isfinite(self.box_length) and self.box_length > 0):
            raise ConfigError(f"box_length must be positive, got {self.box_length}", key="box_length")
        object.__setattr__(self, "num_points", int(self.num_points))
        object.__setattr__(self, "box_length", float(self.box_length))

        m, length = self.num_points, self.box_length
        x = -0.5 * length + np.arange(m) * (length / m)
        k = np.rint(sp_fft.fftfreq(m, d=1.0 / m)).astype(np.int64)
        xi = (2.0 * np.pi / length) * k
        for arr in (x, k, xi):
            arr.flags.writeable = False
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "mode_numbers", k)
        object.__setattr__(self, "wavenumbers", xi)
        logger.debug(f"[GRID] built L={length} M={m} nyquist={self.nyquist:.6g}")

    # ----- geometry -----
    @property
    def spacing(self) -> float:
        return self.box_length / self.num_points

    @property
    def half_width(self) -> float:
        return 0.5 * self.box_length

    @property
    def nyquist(self) -> float:
        """Largest |xi| on the grid, pi*M/L (attained only by the Nyquist mode)."""
        return np.pi * self.num_points / self.box_length

    @property
    def max_wavenumber(self) -> float:
        return float(np.max(np.abs(self.wavenumbers)))

    @property
    def nyquist_index(self) -> int:
        return self.num_points // 2

    def require_same(self, other: "SpectralGrid", what: str = "field") -> None:
        if self != other:
            raise GridMismatchError(
                f"{what} lives on grid (L={other.box_length}, M={other.num_points}); "
                f"expected (L={self.box_length}, M={self.num_points})"
            )

    def check_cutoff(self, cutoff: float) -> None:
        if not (np.isfinite(cutoff) and cutoff > 0):
            raise SpectralDomainError(f"Frequency cutoff must be positive, got {cutoff}")
        if cutoff > self.nyquist * (1.0 + 1e-12):
            raise SpectralDomainError(
                f"Frequency cutoff N={cutoff:.6g} exceeds the Nyquist wavenumber {self.nyquist:.6g}"
            )

    # ----- transforms -----
    def _fft(self, values: np.ndarray) -> np.ndarray:
        return sp_fft.fft(values, axis=-1)

    def _ifft(self, coeffs: np.ndarray) -> np.ndarray:
        return sp_fft.ifft(coeffs, axis=-1)

    def forward(self, values: np.ndarray) -> np.ndarray:
        """Normalized Fourier coefficients along the last axis."""
        return self._fft(np.asarray(values, dtype=np.float64)) / self.num_points

    def inverse(self, coeffs: np.ndarray) -> np.ndarray:
        """Inverse of `forward`; returns the real part after checking the imaginary residue."""
        return self.to_real(self._ifft(np.asarray(coeffs) * self.num_points))

    def to_real(self, values: np.ndarray) -> np.ndarray:
        real = values.real
        residue = float(np.max(np.abs(values.imag))) if values.size else 0.0
        scale = max(1.0, float(np.max(np.abs(real))) if values.size else 0.0)
        if residue > REALNESS_TOL * scale:
            raise SpectralDomainError(
                f"Inverse transform left an imaginary residue {residue:.3e} (scale {scale:.3e})"
            )
        return np.ascontiguousarray(real)

    # ----- quadrature -----
    def integrate(self, values: np.ndarray) -> np.ndarray | float:
        """Trapezoid rule on the periodic grid (exact for band-limited integrands)."""
        return self.spacing * np.sum(values, axis=-1)

    def round_trip_error(self, values: np.ndarray) -> float:
        values = np.asarray(values, dtype=np.float64)
        back = self.inverse(self.forward(values))
        return float(np.linalg.norm(back - values) / max(np.linalg.norm(values), 1e-300))
