# spectral/errors.py
"""
Exception hierarchy shared by every package of the lab.
Report-style checks never raise these for a failed property; they flag it instead.
"""
from __future__ import annotations

from typing import Any, Optional, Sequence


class LabError(Exception):
    """Base class for every error raised by the lab."""


class GridMismatchError(LabError, ValueError):
    """Fields or operators living on different grids were combined."""


class SpectralDomainError(LabError, ValueError):
    """A multiplier parameter lies outside what the grid can represent."""


class FieldValueError(LabError, ValueError):
    """A field contains NaN/Inf or breaks its declared sphere tolerance."""


class ConfigError(LabError, ValueError):
    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        where = f" (line {line})" if line is not None else ""
        super().__init__(f"{message}{where}")


class StabilityError(LabError):
    """dt lies outside the documented stability region of the integrator."""


class BlowUpError(LabError):
    def __init__(self, time: float, norm: float, message: Optional[str] = None):
        self.time = time
        self.norm = norm
        super().__init__(message or f"Blow-up detected at t={time:.6g} (last finite sup-norm {norm:.6g})")


class PicardContractionError(LabError):
    def __init__(self, ratios: Sequence[float], window: float):
        self.ratios = list(ratios)
        self.window = window
        super().__init__(
            f"Picard iteration does not contract on T_loc={window:.3g} "
            f"(ratios={[round(r, 4) for r in self.ratios[-4:]]}); retry with a smaller contraction window."
        )


class HorizonMismatchError(LabError, ValueError):
    """Trajectory and test function disagree on grid or time horizon."""


class SweepAbortedError(LabError):
    def __init__(self, message: str, partial_report: Any = None):
        self.partial_report = partial_report
        super().__init__(message)


class SnapshotError(LabError, IOError):
    """Snapshot file is malformed (bad magic, truncated, or unknown version)."""
