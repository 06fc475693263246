# ----------------------------------------------------
"""
Declarative table of every tolerance the lab checks against.
Each entry names the value (or its formula), the module that enforces it and
what it guards. No logic here beyond assembling the table for the manifest.
"""
# ----------------------------------------------------
from __future__ import annotations

from typing import Any, Dict

from analysis import diagnostics, sweep, weak_form
from dynamics import initial_data, solver
from spectral import grid

TOLERANCE_SPECS: Dict[str, Dict[str, Any]] = {
    "realness": {
        "module": "spectral.grid",
        "value": grid.REALNESS_TOL,
        "formula": "max|Im| <= tol * max(1, max|Re|)",
        "guards": "inverse transforms of real-symmetric spectra",
    },
    "sphere_data": {
        "module": "dynamics.initial_data",
        "value": initial_data.SPHERE_TOL,
        "formula": "max_x ||u0|^2 - 1|",
        "guards": "initial data lies on the sphere",
    },
    "far_field_data": {
        "module": "dynamics.initial_data",
        "value": initial_data.FAR_FIELD_TOL,
        "formula": "max_{|x - x0| >= R0} |u0 - Q|",
        "guards": "initial data equals Q outside its support",
    },
    "spectral_decay": {
        "module": "dynamics.initial_data",
        "value": initial_data.MIN_DECAY_RATE,
        "formula": "fitted |u_k| ~ |xi|^-p with p > value",
        "guards": "initial data resolved by the grid",
    },
    "picard_tolerance": {
        "module": "dynamics.solver",
        "value": solver.PicardSettings().tolerance,
        "formula": "X_T distance between consecutive iterates",
        "guards": "Picard convergence",
    },
    "monotone_energy": {
        "module": "analysis.diagnostics",
        "value": diagnostics.MONOTONE_TOL,
        "formula": "per-step E_c increase <= value * (1 + E_c(0))",
        "guards": "critical energy is nonincreasing",
    },
    "max_principle": {
        "module": "analysis.diagnostics",
        "value": diagnostics.MAX_PRINCIPLE_BASE_TOL,
        "formula": f"{diagnostics.MAX_PRINCIPLE_BASE_TOL:g} + {diagnostics.MAX_PRINCIPLE_DT_COEFF:g} * dt^2",
        "guards": "max_{t,x} |u|^2 <= 1 + tol",
    },
    "h12_uniform": {
        "module": "analysis.diagnostics",
        "value": diagnostics.H12_UNIFORM_TOL,
        "formula": "sup_t |u|_{H^1/2} <= |u0|_{H^1/2} * (1 + value)",
        "guards": "uniform critical-norm bound",
    },
    "pairing_identity": {
        "module": "analysis.weak_form",
        "value": weak_form.PAIRING_TOL,
        "formula": "value * (1 + |u| |phi| (1 + max|xi|))",
        "guards": "the two forms of the nonlinear pairing agree",
    },
    "sphere_envelope": {
        "module": "analysis.sweep",
        "value": sweep.SPHERE_INTERCEPT_TOL,
        "formula": "intercept of the linear-in-eps envelope",
        "guards": "sphere certificate vanishes with eps (when required)",
    },
    "trend_floor": {
        "module": "analysis.sweep",
        "value": sweep.DECREASE_FLOOR,
        "formula": "values below are treated as zero in trend checks",
        "guards": "trivially convergent ladders",
    },
}


def tolerance_table() -> Dict[str, Dict[str, Any]]:
    """Copy of TOLERANCE_SPECS for embedding in a run manifest."""
    return {name: dict(spec) for name, spec in TOLERANCE_SPECS.items()}
