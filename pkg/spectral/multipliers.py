# spectral/multipliers.py
"""
Exact Fourier-multiplier realizations of the linear operators of the lab:
|D|^s = (-Delta)^{s/2}, Hilbert transform, heat semigroup, sharp Littlewood-Paley
projections and the spatial derivative.

Each multiplier kind maps to a gain builder in GAIN_REGISTRY; gains are cached
per (grid, spec) because both are immutable and hashable.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Dict, Optional

import numpy as np

from spectral.errors import SpectralDomainError
from spectral.fields import VectorField3, l2_norm
from spectral.grid import SpectralGrid

logger = logging.getLogger(__name__)


# ---------- 1) Multiplier description ----------
@dataclass(frozen=True)
class MultiplierSpec:
    kind: str
    order: Optional[float] = None      # s for fractional_laplacian
    viscosity: Optional[float] = None  # eps for heat
    time: Optional[float] = None       # t for heat
    cutoff: Optional[float] = None     # N for lp_low / lp_high

    def __post_init__(self):
        if self.kind not in GAIN_REGISTRY:
            raise SpectralDomainError(f"Unknown multiplier kind: {self.kind!r}")
        if self.kind == "fractional_laplacian":
            if self.order is None or not 0.0 <= self.order <= 2.0:
                raise SpectralDomainError(f"fractional_laplacian order must lie in [0, 2], got {self.order}")
        if self.kind == "heat":
            if self.viscosity is None or not self.viscosity > 0:
                raise SpectralDomainError(f"heat viscosity must be positive, got {self.viscosity}")
            if self.time is None or not self.time >= 0:
                raise SpectralDomainError(f"heat time must be nonnegative, got {self.time}")
        if self.kind in ("lp_low", "lp_high"):
            if self.cutoff is None or not self.cutoff > 0:
                raise SpectralDomainError(f"{self.kind} cutoff must be positive, got {self.cutoff}")

    # ----- named constructors -----
    @classmethod
    def fractional_laplacian(cls, s: float) -> "MultiplierSpec":
        return cls("fractional_laplacian", order=float(s))

    @classmethod
    def hilbert(cls) -> "MultiplierSpec":
        return cls("hilbert")

    @classmethod
    def heat(cls, eps: float, t: float) -> "MultiplierSpec":
        return cls("heat", viscosity=float(eps), time=float(t))

    @classmethod
    def lp_low(cls, cutoff: float) -> "MultiplierSpec":
        return cls("lp_low", cutoff=float(cutoff))

    @classmethod
    def lp_high(cls, cutoff: float) -> "MultiplierSpec":
        return cls("lp_high", cutoff=float(cutoff))

    @classmethod
    def derivative(cls) -> "MultiplierSpec":
        return cls("derivative")


def half_laplacian() -> MultiplierSpec:
    """(-Delta)^{1/2}, gain |xi|."""
    return MultiplierSpec.fractional_laplacian(1.0)


def quarter_laplacian() -> MultiplierSpec:
    """(-Delta)^{1/4}, gain |xi|^{1/2}."""
    return MultiplierSpec.fractional_laplacian(0.5)


# ---------- 2) Gain builders ----------
def _odd_sign(grid: SpectralGrid) -> np.ndarray:
    """sgn(xi) with the unpaired Nyquist mode zeroed (odd-multiplier convention)."""
    sign = np.sign(grid.wavenumbers)
    sign[grid.nyquist_index] = 0.0
    return sign


def _fractional_gain(grid: SpectralGrid, spec: MultiplierSpec) -> np.ndarray:
    gain = np.abs(grid.wavenumbers) ** spec.order
    gain[0] = 0.0
    return gain


def _hilbert_gain(grid: SpectralGrid, spec: MultiplierSpec) -> np.ndarray:
    return -1j * _odd_sign(grid)


def _heat_gain(grid: SpectralGrid, spec: MultiplierSpec) -> np.ndarray:
    gain = np.exp(-spec.viscosity * grid.wavenumbers ** 2 * spec.time)
    gain[0] = 1.0
    return gain


def _lp_low_gain(grid: SpectralGrid, spec: MultiplierSpec) -> np.ndarray:
    grid.check_cutoff(spec.cutoff)
    return (np.abs(grid.wavenumbers) < spec.cutoff).astype(np.float64)


def _lp_high_gain(grid: SpectralGrid, spec: MultiplierSpec) -> np.ndarray:
    grid.check_cutoff(spec.cutoff)
    return (np.abs(grid.wavenumbers) >= spec.cutoff).astype(np.float64)


def _derivative_gain(grid: SpectralGrid, spec: MultiplierSpec) -> np.ndarray:
    gain = 1j * grid.wavenumbers
    gain[grid.nyquist_index] = 0.0
    return gain


GAIN_REGISTRY: Dict[str, Callable[[SpectralGrid, MultiplierSpec], np.ndarray]] = {
    "fractional_laplacian": _fractional_gain,
    "hilbert": _hilbert_gain,
    "heat": _heat_gain,
    "lp_low": _lp_low_gain,
    "lp_high": _lp_high_gain,
    "derivative": _derivative_gain,
}


@lru_cache(maxsize=256)
def gain(grid: SpectralGrid, spec: MultiplierSpec) -> np.ndarray:
    """Complex gain per wavenumber, FFT order, read-only."""
    table = np.asarray(GAIN_REGISTRY[spec.kind](grid, spec), dtype=np.complex128)
    table.flags.writeable = False
    return table


# ---------- 3) Application ----------
def filter_values(
    grid: SpectralGrid,
    spec: MultiplierSpec,
    values: np.ndarray,
) -> np.ndarray:
    """Raw-array form of apply_multiplier; `values` has shape (..., M)."""
    table = gain(grid, spec)
    return grid.to_real(grid._ifft(table * grid._fft(values)))


def apply_multiplier(
    grid: SpectralGrid,
    spec: MultiplierSpec,
    f: VectorField3,
) -> VectorField3:
    grid.require_same(f.grid)
    return VectorField3(grid, filter_values(grid, spec, f.values))


def compose_check(grid: SpectralGrid, f: VectorField3) -> float:
    """
    Relative L^2 residual of  H(d/dx f) - |D| f.
    Zero up to round-off for fields without Nyquist content.
    """
    grid.require_same(f.grid)
    lhs = apply_multiplier(grid, MultiplierSpec.hilbert(), apply_multiplier(grid, MultiplierSpec.derivative(), f))
    rhs = apply_multiplier(grid, MultiplierSpec.fractional_laplacian(1.0), f)
    return l2_norm(lhs - rhs) / max(l2_norm(f), 1e-30)


def low_high_split(grid: SpectralGrid, f: VectorField3, cutoff: float) -> tuple[VectorField3, VectorField3]:
    """(P_{<N} f, P_{>=N} f)."""
    return (
        apply_multiplier(grid, MultiplierSpec.lp_low(cutoff), f),
        apply_multiplier(grid, MultiplierSpec.lp_high(cutoff), f),
    )
