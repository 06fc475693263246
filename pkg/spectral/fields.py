# spectral/fields.py
"""
Vector-valued field algebra on a SpectralGrid: pointwise products, norms
(L^2, L^inf, homogeneous H^s) and sphere-geometry helpers, plus the
Trajectory container the solver hands to every diagnostic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING, Iterator, Optional, Sequence

import numpy as np
from scipy import fft as sp_fft

from spectral.errors import FieldValueError, GridMismatchError
from spectral.grid import SpectralGrid

if TYPE_CHECKING:
    from dynamics.solver import SolverConfig


# ---------- 1) VectorField3 ----------
@dataclass(frozen=True, eq=False)
class VectorField3:
    """
    One time slice u(x) in R^3 sampled on `grid`.
    `values` has shape (3, M) and is read-only once the field is built.
    `sphere_tolerance`, when set, flags the field as sphere-valued.
    """

    grid: SpectralGrid
    values: np.ndarray
    sphere_tolerance: Optional[float] = None

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64, copy=True)
        if arr.shape != (3, self.grid.num_points):
            raise GridMismatchError(
                f"VectorField3 expects shape (3, {self.grid.num_points}), got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise FieldValueError("VectorField3 components must be finite (found NaN/Inf)")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)
        if self.sphere_tolerance is not None:
            dev = sphere_deviation(self)
            if dev > self.sphere_tolerance:
                raise FieldValueError(
                    f"Field flagged sphere-valued deviates by {dev:.3e} > {self.sphere_tolerance:.3e}"
                )

    # ----- constructors -----
    @classmethod
    def constant(cls, grid: SpectralGrid, vector: Sequence[float], **kwargs) -> "VectorField3":
        vec = np.asarray(vector, dtype=np.float64).reshape(3, 1)
        return cls(grid, np.repeat(vec, grid.num_points, axis=1), **kwargs)

    @classmethod
    def zeros(cls, grid: SpectralGrid) -> "VectorField3":
        return cls(grid, np.zeros((3, grid.num_points)))

    @classmethod
    def from_components(cls, grid: SpectralGrid, c0, c1, c2) -> "VectorField3":
        m = grid.num_points
        comps = [np.broadcast_to(np.asarray(c, dtype=np.float64), (m,)) for c in (c0, c1, c2)]
        return cls(grid, np.stack(comps))

    def with_values(self, values: np.ndarray) -> "VectorField3":
        return VectorField3(self.grid, values)

    # ----- views -----
    @property
    def components(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.values[0], self.values[1], self.values[2]

    def coefficients(self) -> np.ndarray:
        return self.grid.forward(self.values)

    def is_constant(self) -> bool:
        return bool(np.all(self.values == self.values[:, :1]))

    # ----- arithmetic -----
    def _check(self, other: "VectorField3") -> None:
        self.grid.require_same(other.grid)

    def __add__(self, other: "VectorField3") -> "VectorField3":
        self._check(other)
        return VectorField3(self.grid, self.values + other.values)

    def __sub__(self, other: "VectorField3") -> "VectorField3":
        self._check(other)
        return VectorField3(self.grid, self.values - other.values)

    def __mul__(self, scalar: float) -> "VectorField3":
        return VectorField3(self.grid, float(scalar) * self.values)

    __rmul__ = __mul__

    def __neg__(self) -> "VectorField3":
        return VectorField3(self.grid, -self.values)


# ---------- 2) Pointwise products ----------
def _dealiased_product(grid: SpectralGrid, a: np.ndarray, b: np.ndarray, op) -> np.ndarray:
    """3/2-rule: zero-pad both spectra to 3M/2 points, multiply, truncate back to M."""
    m = grid.num_points
    big = 3 * m // 2
    big += big % 2

    def pad(values):
        coeffs = sp_fft.fftshift(grid.forward(values), axes=-1)
        padded = np.zeros(values.shape[:-1] + (big,), dtype=np.complex128)
        start = (big - m) // 2
        padded[..., start:start + m] = coeffs
        padded[..., start] = 0.0  # drop the unpaired Nyquist mode
        return sp_fft.ifft(sp_fft.ifftshift(padded, axes=-1), axis=-1).real * big

    product = op(pad(a), pad(b))
    coeffs = sp_fft.fftshift(sp_fft.fft(product, axis=-1) / big, axes=-1)
    start = (big - m) // 2
    trimmed = coeffs[..., start:start + m].copy()
    trimmed[..., 0] = 0.0
    return grid.inverse(sp_fft.ifftshift(trimmed, axes=-1))


def _cross_values(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.cross(a, b, axis=0)


def cross(a: VectorField3, b: VectorField3, dealias: bool = False) -> VectorField3:
    """Pointwise R^3 cross product, collocation by default."""
    a.grid.require_same(b.grid)
    if dealias:
        return VectorField3(a.grid, _dealiased_product(a.grid, a.values, b.values, _cross_values))
    return VectorField3(a.grid, _cross_values(a.values, b.values))


def dot(a: VectorField3, b: VectorField3) -> np.ndarray:
    """Pointwise inner product, shape (M,)."""
    a.grid.require_same(b.grid)
    return np.einsum("im,im->m", a.values, b.values)


def norm_squared(f: VectorField3) -> np.ndarray:
    """|f(x)|^2 per grid point."""
    return np.einsum("im,im->m", f.values, f.values)


# ---------- 3) Norms ----------
def l2_norm(f: VectorField3) -> float:
    return float(np.sqrt(f.grid.integrate(norm_squared(f))))


def linf_norm(f: VectorField3) -> float:
    return float(np.sqrt(np.max(norm_squared(f))))


def hs_norm(f: VectorField3, s: float) -> float:
    """
    Homogeneous Sobolev norm (L * sum_k |xi_k|^{2s} |f_k|^2)^{1/2}, summed over components.
    s = 0 keeps the zero mode and reduces to the L^2 norm.
    """
    if not 0.0 <= s <= 1.5:
        raise ValueError(f"hs_norm order must lie in [0, 3/2], got {s}")
    coeffs = f.coefficients()
    weight = np.abs(f.grid.wavenumbers) ** (2.0 * s)
    total = f.grid.box_length * np.sum(weight * np.abs(coeffs) ** 2)
    return float(np.sqrt(total))


def sphere_deviation(f: VectorField3) -> float:
    """max_x | |f(x)|^2 - 1 |"""
    return float(np.max(np.abs(norm_squared(f) - 1.0)))


def project_to_sphere(values: np.ndarray) -> np.ndarray:
    return values / np.sqrt(np.einsum("im,im->m", values, values))


def unit_vector(vector: Sequence[float]) -> np.ndarray:
    vec = np.asarray(vector, dtype=np.float64)
    return vec / np.linalg.norm(vec)


# ---------- 4) Trajectory ----------
@dataclass(frozen=True, eq=False)
class Trajectory:
    """
    Time-indexed stack of slices. `data` has shape (n_times, 3, M).
    Stored read-only; diagnostics treat it as an immutable snapshot.
    """

    times: np.ndarray
    data: np.ndarray
    grid: SpectralGrid
    config: Optional["SolverConfig"] = None

    def __post_init__(self):
        times = np.array(self.times, dtype=np.float64, copy=True)
        data = np.array(self.data, dtype=np.float64, copy=True)
        if data.ndim != 3 or data.shape[1:] != (3, self.grid.num_points):
            raise GridMismatchError(f"Trajectory data must be (n, 3, {self.grid.num_points}), got {data.shape}")
        if times.shape != (data.shape[0],):
            raise ValueError(f"times has shape {times.shape}; expected ({data.shape[0]},)")
        if times.size == 0 or times[0] != 0.0:
            raise ValueError("Trajectory times must start at 0")
        if times.size > 1:
            gaps = np.diff(times)
            if np.any(gaps <= 0):
                raise ValueError("Trajectory times must be strictly increasing")
            stride = self.config.output_dt if self.config is not None else gaps[0]
            if np.max(np.abs(gaps - stride)) > 1e-12 * abs(stride) + 4 * np.spacing(times[-1]):
                raise ValueError(f"Trajectory times are not uniformly spaced by {stride}")
        if not np.all(np.isfinite(data)):
            raise FieldValueError("Trajectory contains non-finite values")
        times.flags.writeable = False
        data.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "data", data)

    def __len__(self) -> int:
        return self.times.size

    def __getitem__(self, index: int) -> VectorField3:
        return VectorField3(self.grid, self.data[index])

    def __iter__(self) -> Iterator[VectorField3]:
        for j in range(len(self)):
            yield self[j]

    @property
    def slices(self) -> list[VectorField3]:
        return list(self)

    @property
    def initial(self) -> VectorField3:
        return self[0]

    @property
    def final(self) -> VectorField3:
        return self[-1]

    @property
    def final_time(self) -> float:
        return float(self.times[-1])

    @property
    def stride(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self) > 1 else 0.0

    @property
    def eps(self) -> float:
        return self.config.eps if self.config is not None else 0.0

    def time_weights(self) -> np.ndarray:
        """Composite trapezoid weights on the stored times."""
        w = np.zeros_like(self.times)
        if len(self) > 1:
            gaps = np.diff(self.times)
            w[:-1] += 0.5 * gaps
            w[1:] += 0.5 * gaps
        return w
