# lab_io/config.py
"""
Run configuration: a TOML file with sections [grid] [data] [solver] [picard]
[diagnostics] [sweep] [run]. Every key is declared in CONFIG_SCHEMA with its
type and default; unknown keys and invariant violations are reported with the
line that introduced them.

Example:
    [grid]
    box_length = 16.0
    num_points = 1024

    [data]
    family = "geodesic_bump"

    [solver]
    eps = 0.01
    final_time = 1.0
"""
from __future__ import annotations

import logging
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
import toml

from analysis.sweep import SweepPlan, SweepWindow
from dynamics.initial_data import InitialDataSpec
from dynamics.solver import PicardSettings, SolverConfig
from spectral.errors import ConfigError
from spectral.grid import SpectralGrid

logger = logging.getLogger(__name__)

MAX_WORKERS_ENV = "HWM_MAX_WORKERS"
REQUIRED = object()

# ---------- 1) Schema ----------
# section -> key -> (type tag, default)
CONFIG_SCHEMA: Dict[str, Dict[str, Tuple[str, Any]]] = {
    "grid": {
        "box_length": ("float", REQUIRED),
        "num_points": ("int", REQUIRED),
    },
    "data": {
        "family": ("str", "geodesic_bump"),
        "far_field": ("floats", [0.0, 0.0, 1.0]),
        "amplitude": ("float", float(np.pi)),
        "support_radius": ("float", 1.0),
        "center": ("float", 0.0),
        "bump_order": ("int", 8),
        "twist": ("float", 0.5 * float(np.pi)),
    },
    "solver": {
        "eps": ("float", REQUIRED),
        "final_time": ("float", REQUIRED),
        "dt": ("float", 1e-3),
        "output_stride": ("int", 10),
        "integrator": ("str", "etd_rk2"),
        "project_to_sphere": ("bool", False),
        "gilbert_damping": ("float", 0.0),
        "dealias": ("bool", False),
        "blowup_threshold": ("float", 1e6),
    },
    "picard": {
        "max_iters": ("int", 50),
        "window": ("float", 1e-2),
        "substeps": ("int", 16),
        "tolerance": ("float", 1e-11),
    },
    "diagnostics": {
        "far_field_radius": ("float", None),       # default: 2 * support_radius
        "tail_cutoffs": ("floats", [8.0, 16.0, 32.0, 64.0]),
        "commutator_cutoffs": ("floats", [8.0, 16.0, 32.0, 64.0]),
        "identities": ("bool", True),
        "battery": ("bool", True),
    },
    "sweep": {
        "eps_ladder": ("floats", [0.1, 0.05, 0.025, 0.0125]),
        "cutoffs": ("floats", None),               # default: round(1/eps) capped at Nyquist
        "windows": ("pairs", None),                # default: nested (T/2, L/8), (T, L/4), (T, L/2)
        "min_battery_passes": ("int", 24),
        "require_sphere_envelope": ("bool", False),
    },
    "run": {
        "output_dir": ("str", "runs"),
        "max_workers": ("int", 0),                 # 0 lets the pool decide
    },
}
REQUIRED_SECTIONS = ("grid", "solver")


# ---------- 2) Settings objects ----------
@dataclass(frozen=True)
class DiagnosticsSettings:
    far_field_radius: Optional[float] = None
    tail_cutoffs: Tuple[float, ...] = (8.0, 16.0, 32.0, 64.0)
    commutator_cutoffs: Tuple[float, ...] = (8.0, 16.0, 32.0, 64.0)
    identities: bool = True
    battery: bool = True


@dataclass(frozen=True)
class SweepSettings:
    eps_ladder: Tuple[float, ...] = (0.1, 0.05, 0.025, 0.0125)
    cutoffs: Optional[Tuple[float, ...]] = None
    windows: Optional[Tuple[Tuple[float, float], ...]] = None
    min_battery_passes: int = 24
    require_sphere_envelope: bool = False


@dataclass(frozen=True)
class RunSettings:
    output_dir: str = "runs"
    max_workers: int = 0

    @property
    def pool_size(self) -> Optional[int]:
        return self.max_workers or None


@dataclass(frozen=True)
class RunConfig:
    solver: SolverConfig
    data: InitialDataSpec
    diagnostics: DiagnosticsSettings = field(default_factory=DiagnosticsSettings)
    sweep: Optional[SweepSettings] = None
    run: RunSettings = field(default_factory=RunSettings)
    source: Optional[str] = field(default=None, compare=False)

    @property
    def grid(self) -> SpectralGrid:
        return self.solver.grid

    @property
    def far_field_radius(self) -> float:
        return self.diagnostics.far_field_radius or 2.0 * self.data.support_radius

    def sweep_plan(self) -> SweepPlan:
        settings = self.sweep or SweepSettings()
        return SweepPlan(
            base=self.solver,
            data=self.data,
            eps_ladder=settings.eps_ladder,
            cutoffs=settings.cutoffs,
            windows=tuple(SweepWindow(*w) for w in settings.windows) if settings.windows else None,
            min_battery_passes=settings.min_battery_passes,
            require_sphere_envelope=settings.require_sphere_envelope,
        )


# ---------- 3) Parsing ----------
_SECTION_RE = re.compile(r"^\s*\[\s*([A-Za-z0-9_]+)\s*\]\s*(#.*)?$")
_KEY_RE = re.compile(r"^\s*([A-Za-z0-9_]+)\s*=")


def _locate_keys(text: str) -> Dict[Tuple[str, Optional[str]], int]:
    """(section, key) -> 1-based line; (section, None) for the header itself."""
    where: Dict[Tuple[str, Optional[str]], int] = {}
    section = ""
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1)
            where.setdefault((section, None), lineno)
            continue
        m = _KEY_RE.match(line)
        if m:
            where.setdefault((section, m.group(1)), lineno)
    return where


def _coerce(tag: str, value: Any, key: str) -> Any:
    def bad():
        return ConfigError(f"{key} must be of type {tag}, got {value!r}", key=key)

    if tag == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad()
        return float(value)
    if tag == "int":
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise bad()
        return int(value)
    if tag == "bool":
        if not isinstance(value, bool):
            raise bad()
        return value
    if tag == "str":
        if not isinstance(value, str):
            raise bad()
        return value
    if tag == "floats":
        if not isinstance(value, list) or not value:
            raise bad()
        return tuple(_coerce("float", v, key) for v in value)
    if tag == "pairs":
        if not isinstance(value, list) or not value or any(not isinstance(v, list) or len(v) != 2 for v in value):
            raise bad()
        return tuple(tuple(_coerce("float", c, key) for c in v) for v in value)
    raise ValueError(f"unknown schema tag {tag!r}")


def _section_values(raw: Dict[str, Any], section: str, where) -> Dict[str, Any]:
    values = {}
    given = raw.get(section, {})
    for key, (tag, default) in CONFIG_SCHEMA[section].items():
        if key in given:
            try:
                values[key] = _coerce(tag, given[key], key)
            except ConfigError as exc:
                raise ConfigError(str(exc), key=key, line=where.get((section, key))) from None
        elif default is REQUIRED:
            raise ConfigError(f"missing required key [{section}] {key}", key=key, line=where.get((section, None)))
        else:
            values[key] = tuple(default) if isinstance(default, list) else default
    return values


def _build(section: str, where, factory, **kwargs):
    """Run a validating constructor, attaching the line of the offending key to any ConfigError."""
    try:
        return factory(**kwargs)
    except ConfigError as exc:
        key = exc.key
        line = where.get((section, key)) or where.get((section, None))
        raise ConfigError(str(exc), key=key, line=line) from None


def config_from_dict(raw: Dict[str, Any], where: Optional[Dict] = None, source: Optional[str] = None) -> RunConfig:
    where = where or {}
    for section, body in raw.items():
        if section not in CONFIG_SCHEMA:
            raise ConfigError(f"unknown section [{section}]", key=section, line=where.get((section, None)))
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table", key=section, line=where.get((section, None)))
        for key in body:
            if key not in CONFIG_SCHEMA[section]:
                raise ConfigError(f"unknown key [{section}] {key}", key=key, line=where.get((section, key)))
    for section in REQUIRED_SECTIONS:
        if section not in raw:
            raise ConfigError(f"missing required section [{section}]", key=section)

    g = _section_values(raw, "grid", where)
    d = _section_values(raw, "data", where)
    s = _section_values(raw, "solver", where)
    p = _section_values(raw, "picard", where)
    diag = _section_values(raw, "diagnostics", where)
    r = _section_values(raw, "run", where)

    grid = _build("grid", where, SpectralGrid, **g)
    data = _build("data", where, InitialDataSpec, **d)
    _build("data", where, data.check_fits, grid=grid)
    picard = _build("picard", where, PicardSettings, **p)
    solver = _build("solver", where, SolverConfig, grid=grid, picard=picard, **s)

    env_workers = os.getenv(MAX_WORKERS_ENV)
    if env_workers:
        try:
            r["max_workers"] = int(env_workers)
        except ValueError:
            raise ConfigError(f"{MAX_WORKERS_ENV} must be an integer, got {env_workers!r}", key="max_workers") from None
    if r["max_workers"] < 0:
        raise ConfigError("max_workers must be >= 0", key="max_workers", line=where.get(("run", "max_workers")))

    sweep = None
    if "sweep" in raw:
        sweep = SweepSettings(**_section_values(raw, "sweep", where))
    cfg = RunConfig(
        solver=solver,
        data=data,
        diagnostics=DiagnosticsSettings(**diag),
        sweep=sweep,
        run=RunSettings(**r),
        source=source,
    )
    if cfg.far_field_radius >= grid.half_width:
        raise ConfigError(
            f"far_field_radius {cfg.far_field_radius} must be below the box half-width {grid.half_width}",
            key="far_field_radius",
            line=where.get(("diagnostics", "far_field_radius")) or where.get(("data", "support_radius")),
        )
    for n in cfg.diagnostics.tail_cutoffs + cfg.diagnostics.commutator_cutoffs:
        if not 0 < n <= grid.nyquist:
            raise ConfigError(
                f"cutoff {n} lies outside (0, Nyquist = {grid.nyquist:.6g}]",
                key="tail_cutoffs",
                line=where.get(("diagnostics", "tail_cutoffs")) or where.get(("diagnostics", "commutator_cutoffs")),
            )
    if sweep is not None:
        _build("sweep", where, cfg.sweep_plan)
    return cfg


def parse_config(path: str | Path) -> RunConfig:
    """Read, validate and default-fill a run configuration; first error wins."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Missing config file at {path}")
    text = path.read_text(encoding="utf-8")
    try:
        raw = toml.loads(text)
    except toml.TomlDecodeError as exc:
        raise ConfigError(f"syntax error: {exc.msg}", line=exc.lineno) from None
    cfg = config_from_dict(raw, _locate_keys(text), source=str(path))
    logger.info(f"[IO] config {path} eps={cfg.solver.eps:g} M={cfg.grid.num_points} sweep={cfg.sweep is not None}")
    return cfg


# ---------- 4) Serialization ----------
def config_to_dict(cfg: RunConfig) -> Dict[str, Any]:
    s, d = cfg.solver, cfg.data
    out: Dict[str, Any] = {
        "grid": {"box_length": cfg.grid.box_length, "num_points": cfg.grid.num_points},
        "data": {
            "family": d.family,
            "far_field": list(d.far_field),
            "amplitude": d.amplitude,
            "support_radius": d.support_radius,
            "center": d.center,
            "bump_order": d.bump_order,
            "twist": d.twist,
        },
        "solver": {
            "eps": s.eps,
            "final_time": s.final_time,
            "dt": s.dt,
            "output_stride": s.output_stride,
            "integrator": s.integrator,
            "project_to_sphere": s.project_to_sphere,
            "gilbert_damping": s.gilbert_damping,
            "dealias": s.dealias,
            "blowup_threshold": s.blowup_threshold,
        },
        "picard": {
            "max_iters": s.picard.max_iters,
            "window": s.picard.window,
            "substeps": s.picard.substeps,
            "tolerance": s.picard.tolerance,
        },
        "diagnostics": {
            "tail_cutoffs": list(cfg.diagnostics.tail_cutoffs),
            "commutator_cutoffs": list(cfg.diagnostics.commutator_cutoffs),
            "identities": cfg.diagnostics.identities,
            "battery": cfg.diagnostics.battery,
        },
        "run": {"output_dir": cfg.run.output_dir, "max_workers": cfg.run.max_workers},
    }
    if cfg.diagnostics.far_field_radius is not None:
        out["diagnostics"]["far_field_radius"] = cfg.diagnostics.far_field_radius
    if cfg.sweep is not None:
        sw = cfg.sweep
        out["sweep"] = {
            "eps_ladder": list(sw.eps_ladder),
            "min_battery_passes": sw.min_battery_passes,
            "require_sphere_envelope": sw.require_sphere_envelope,
        }
        if sw.cutoffs is not None:
            out["sweep"]["cutoffs"] = list(sw.cutoffs)
        if sw.windows is not None:
            out["sweep"]["windows"] = [list(w) for w in sw.windows]
    return out


def serialize_config(cfg: RunConfig) -> str:
    """TOML text that parses back to an equal RunConfig."""
    return toml.dumps(config_to_dict(cfg))
