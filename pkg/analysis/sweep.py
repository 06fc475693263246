# analysis/sweep.py
"""
Vanishing-viscosity sweep: run a geometric eps-ladder on one grid, measure
adjacent-rung Cauchy differences in L^2_{t,x} on nested windows, split them
with the paired Littlewood-Paley cutoff N_j ~ 1/eps_j, and certify the limit
candidate from the trend evidence.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from analysis.diagnostics import (
    critical_energy_report,
    gronwall_rate,
    h12_uniform_bound,
    max_principle_report,
    time_regularity,
)
from analysis.weak_form import battery_residuals, canonical_battery
from dynamics.initial_data import InitialDataSpec, make_initial
from dynamics.solver import SolverConfig, evolve
from spectral.errors import BlowUpError, ConfigError, SweepAbortedError
from spectral.fields import Trajectory
from spectral.grid import SpectralGrid

logger = logging.getLogger(__name__)

MIN_RUNGS = 4
MIN_PAIRS = 3
DEFAULT_MIN_BATTERY_PASSES = 24
SPHERE_INTERCEPT_TOL = 1e-6
DECREASE_FLOOR = 1e-13        # values below this count as zero in trend checks
MAX_WORK = 5e10               # rungs * steps * M


class SweepWindow(NamedTuple):
    duration: float     # T_n
    half_width: float   # U_n = (center - half_width, center + half_width)


def default_ladder(eps0: float = 1e-1, rungs: int = MIN_RUNGS) -> Tuple[float, ...]:
    """eps_j = eps0 * 2^-j, j = 0..rungs-1."""
    return tuple(eps0 * 0.5 ** j for j in range(rungs))


def default_windows(base: SolverConfig) -> Tuple[SweepWindow, ...]:
    L, T = base.grid.box_length, base.final_time
    return (SweepWindow(T / 2.0, L / 8.0), SweepWindow(T, L / 4.0), SweepWindow(T, L / 2.0))


# ---------- 1) Plan ----------
@dataclass(frozen=True)
class SweepPlan:
    base: SolverConfig
    data: InitialDataSpec
    eps_ladder: Tuple[float, ...] = field(default_factory=default_ladder)
    cutoffs: Optional[Tuple[float, ...]] = None
    windows: Optional[Tuple[SweepWindow, ...]] = None
    min_battery_passes: int = DEFAULT_MIN_BATTERY_PASSES
    require_sphere_envelope: bool = False
    rung_overrides: Dict[int, Dict[str, Any]] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        ladder = tuple(float(e) for e in self.eps_ladder)
        if len(ladder) < MIN_RUNGS:
            raise ConfigError(f"eps_ladder needs at least {MIN_RUNGS} rungs, got {len(ladder)}", key="eps_ladder")
        if any(e <= 0 for e in ladder) or any(b >= a for a, b in zip(ladder, ladder[1:])):
            raise ConfigError(f"eps_ladder must be positive and strictly decreasing, got {ladder}", key="eps_ladder")
        object.__setattr__(self, "eps_ladder", ladder)

        grid = self.base.grid
        if self.cutoffs is not None:
            cutoffs = tuple(float(n) for n in self.cutoffs)
            if len(cutoffs) != len(ladder):
                raise ConfigError(f"cutoffs has {len(cutoffs)} entries for {len(ladder)} rungs", key="cutoffs")
            if any(not 0 < n <= grid.nyquist for n in cutoffs):
                raise ConfigError(f"cutoffs must lie in (0, Nyquist = {grid.nyquist:.6g}], got {cutoffs}", key="cutoffs")
            object.__setattr__(self, "cutoffs", cutoffs)

        windows = tuple(SweepWindow(*w) for w in (self.windows or default_windows(self.base)))
        for w in windows:
            if not 0 < w.duration <= self.base.final_time * (1 + 1e-12) or not 0 < w.half_width <= grid.half_width:
                raise ConfigError(f"window {tuple(w)} does not fit [0, T] x box", key="windows")
        for a, b in zip(windows, windows[1:]):
            if b.duration < a.duration or b.half_width < a.half_width:
                raise ConfigError(f"windows must be nested, got {tuple(a)} then {tuple(b)}", key="windows")
        object.__setattr__(self, "windows", windows)

        if not 0 <= self.min_battery_passes <= 27:
            raise ConfigError(f"min_battery_passes must lie in [0, 27], got {self.min_battery_passes}", key="min_battery_passes")
        self.data.check_fits(grid)
        work = len(ladder) * self.base.num_steps * grid.num_points
        if work > MAX_WORK:
            raise ConfigError(f"sweep work {work:.3g} exceeds the work limit {MAX_WORK:.3g}", key="eps_ladder")

    @property
    def grid(self) -> SpectralGrid:
        return self.base.grid

    @property
    def paired_cutoffs(self) -> Tuple[float, ...]:
        """N_j = round(1/eps_j), capped at Nyquist, unless cutoffs were given explicitly."""
        if self.cutoffs is not None:
            return self.cutoffs
        return tuple(min(float(max(round(1.0 / e), 1)), self.grid.nyquist) for e in self.eps_ladder)

    def rung_config(self, j: int) -> SolverConfig:
        return self.base.replace(eps=self.eps_ladder[j], **self.rung_overrides.get(j, {}))


# ---------- 2) Report ----------
def flow_family(cfg: SolverConfig) -> Tuple[Any, ...]:
    """Everything but eps that selects the equation being solved."""
    return (cfg.integrator, cfg.project_to_sphere, cfg.gilbert_damping, cfg.dealias, cfg.dt, cfg.output_stride)


@dataclass(frozen=True, eq=False)
class RungResult:
    index: int
    eps: float
    cutoff: float
    trajectory: Trajectory
    summary: Dict[str, Any]
    battery: pd.DataFrame

    @property
    def family(self) -> Tuple[Any, ...]:
        return flow_family(self.trajectory.config)


@dataclass
class SweepReport:
    plan: SweepPlan
    rungs: List[RungResult]
    cauchy: pd.DataFrame = field(default_factory=pd.DataFrame)
    complete: bool = True
    verdict: Optional[Dict[str, Any]] = None

    @property
    def eps(self) -> np.ndarray:
        return np.array([r.eps for r in self.rungs])

    @property
    def sphere_certificate(self) -> np.ndarray:
        return np.array([r.summary["sphere_certificate"] for r in self.rungs])

    def summary_table(self) -> pd.DataFrame:
        rows = [{"rung": r.index, "eps[1]": r.eps, "N[1/L]": r.cutoff, **r.summary} for r in self.rungs]
        return pd.DataFrame(rows)

    def battery_table(self) -> pd.DataFrame:
        frames = []
        for r in self.rungs:
            frame = r.battery.copy()
            frame.insert(0, "eps[1]", r.eps)
            frame.insert(0, "rung", r.index)
            frames.append(frame)
        return pd.concat(frames, ignore_index=True) if frames else pd.DataFrame()


# ---------- 3) Running ----------
def summarize_rung(traj: Trajectory) -> Dict[str, Any]:
    mp = max_principle_report(traj)
    ec = critical_energy_report(traj)
    h12 = h12_uniform_bound(traj)
    v = np.sum(traj.data ** 2, axis=1)
    return {
        "max_v[1]": mp["max_v"],
        "max_principle_ok": mp["passed"],
        "e_c_monotone": ec["passed"],
        "e_c_violation[1]": ec["max_violation"],
        "h12_sup[1]": h12["sup"],
        "h12_uniform_ok": h12["passed"],
        "gronwall_rate[1/t]": gronwall_rate(traj),
        "sphere_certificate": float(np.max(np.abs(v - 1.0))),
    }


def _run_rung(plan: SweepPlan, j: int) -> RungResult:
    cfg = plan.rung_config(j)
    logger.info(f"[SWEEP] rung={j} eps={cfg.eps:g} start")
    u0 = make_initial(plan.grid, plan.data)
    traj = evolve(u0, cfg)
    battery = battery_residuals(traj, canonical_battery(plan.grid, cfg.final_time), max_workers=1)
    result = RungResult(
        index=j,
        eps=cfg.eps,
        cutoff=plan.paired_cutoffs[j],
        trajectory=traj,
        summary=summarize_rung(traj),
        battery=battery,
    )
    logger.info(f"[SWEEP] rung={j} eps={cfg.eps:g} done sphere_cert={result.summary['sphere_certificate']:.3e}")
    return result


def run_viscosity_sweep(plan: SweepPlan, max_workers: Optional[int] = None) -> SweepReport:
    """Run every rung on a bounded pool, then reduce into a SweepReport."""
    results: Dict[int, RungResult] = {}
    failure: Optional[BlowUpError] = None
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futures = {j: pool.submit(_run_rung, plan, j) for j in range(len(plan.eps_ladder))}
        for j, fut in futures.items():
            try:
                results[j] = fut.result()
            except BlowUpError as exc:
                logger.error(f"[SWEEP] rung={j} eps={plan.eps_ladder[j]:g} blew up: {exc}")
                failure = failure or exc

    rungs = [results[j] for j in sorted(results)]
    report = SweepReport(plan=plan, rungs=rungs, complete=failure is None)
    if failure is not None:
        raise SweepAbortedError(
            f"sweep aborted after {len(rungs)}/{len(plan.eps_ladder)} rungs: {failure}", partial_report=report
        )
    report.cauchy = cauchy_table(report)
    return report


# ---------- 4) Cauchy differences ----------
def _window_norm(traj_a: Trajectory, traj_b: Trajectory, window: SweepWindow, center: float) -> float:
    """|| u_a - u_b ||_{L^2_{t,x}} on [0, T_n] x U_n."""
    grid = traj_a.grid
    keep_t = traj_a.times <= window.duration * (1 + 1e-12)
    keep_x = np.abs(grid.x - center) < window.half_width * (1 + 1e-12)
    times = traj_a.times[keep_t]
    w = np.zeros_like(times)
    if times.size > 1:
        gaps = np.diff(times)
        w[:-1] += 0.5 * gaps
        w[1:] += 0.5 * gaps
    diff = traj_a.data[keep_t][:, :, keep_x] - traj_b.data[keep_t][:, :, keep_x]
    per_time = grid.spacing * np.sum(diff ** 2, axis=(1, 2))
    return float(np.sqrt(w @ per_time))


def _lp_split(traj_a: Trajectory, traj_b: Trajectory, cutoff: float) -> Dict[str, float]:
    """Three-term split of u_a - u_b with P_{<N} / P_{>=N}, whole box and horizon."""
    grid = traj_a.grid
    w = traj_a.time_weights()
    low = (np.abs(grid.wavenumbers) < cutoff).astype(np.float64)
    a_hat, b_hat = grid.forward(traj_a.data), grid.forward(traj_b.data)

    def tx_norm(coeffs, mask):
        per_time = grid.box_length * np.sum(mask * np.abs(coeffs) ** 2, axis=(1, 2))
        return float(np.sqrt(w @ per_time))

    def h12_tx(coeffs):
        per_time = grid.box_length * np.sum(np.abs(grid.wavenumbers) * np.abs(coeffs) ** 2, axis=(1, 2))
        return float(np.sqrt(w @ per_time))

    high = 1.0 - low
    tail_a, tail_b = tx_norm(a_hat, high), tx_norm(b_hat, high)
    bound_a, bound_b = h12_tx(a_hat) / np.sqrt(cutoff), h12_tx(b_hat) / np.sqrt(cutoff)
    return {
        "low[1]": tx_norm(a_hat - b_hat, low),
        "tail_a[1]": tail_a,
        "tail_b[1]": tail_b,
        "tail_bound_a[1]": bound_a,
        "tail_bound_b[1]": bound_b,
        "tail_bound_ok": bool(tail_a <= bound_a * (1 + 1e-12) + 1e-300 and tail_b <= bound_b * (1 + 1e-12) + 1e-300),
    }


def cauchy_table(report: SweepReport) -> pd.DataFrame:
    """One row per adjacent rung pair and window."""
    plan = report.plan
    rows = []
    for a, b in zip(report.rungs, report.rungs[1:]):
        split = _lp_split(a.trajectory, b.trajectory, b.cutoff)
        for n, window in enumerate(plan.windows):
            rows.append(
                {
                    "pair": a.index,
                    "eps_a[1]": a.eps,
                    "eps_b[1]": b.eps,
                    "N[1/L]": b.cutoff,
                    "window": n,
                    "duration[t]": window.duration,
                    "half_width[L]": window.half_width,
                    "difference[1]": _window_norm(a.trajectory, b.trajectory, window, plan.data.center),
                    **split,
                }
            )
    return pd.DataFrame(rows)


def cauchy_differences(report: SweepReport) -> Dict[str, Any]:
    """
    Per window: least-squares slope of log(difference) against log(1/eps_b).
    A negative slope means the differences shrink as eps -> 0.
    """
    table = report.cauchy if not report.cauchy.empty else cauchy_table(report)
    pairs = table["pair"].nunique() if not table.empty else 0
    if pairs < MIN_PAIRS:
        raise ValueError(f"cauchy trend needs at least {MIN_PAIRS} adjacent pairs, got {pairs}")

    windows = {}
    for n, group in table.groupby("window", sort=True):
        diffs = group["difference[1]"].to_numpy()
        x = np.log(1.0 / group["eps_b[1]"].to_numpy())
        positive = diffs > DECREASE_FLOOR
        if not positive.any():
            slope, status = float("nan"), "trivially_convergent"
        elif positive.sum() < 2:
            slope, status = float("nan"), "undetermined"
        else:
            slope = float(np.polyfit(x[positive], np.log(diffs[positive]), 1)[0])
            status = "convergent" if slope < 0 else "not_convergent"
        windows[int(n)] = {
            "slope": slope,
            "status": status,
            "monotone_decreasing": bool(np.all(np.diff(diffs) < 0)) if positive.any() else True,
            "differences": diffs.tolist(),
        }

    nested = table.pivot(index="pair", columns="window", values="difference[1]").to_numpy()
    window_monotone = bool(np.all(np.diff(nested, axis=1) >= -1e-14 * np.maximum(nested[:, 1:], 1.0)))
    return {
        "windows": windows,
        "window_monotone": window_monotone,
        "tail_bounds_ok": bool(table["tail_bound_ok"].all()),
    }


# ---------- 5) Verdict ----------
def _nonincreasing(values: np.ndarray) -> bool:
    values = np.asarray(values, dtype=np.float64)
    return bool(np.all(values[1:] <= values[:-1] * (1 + 1e-12) + DECREASE_FLOOR))


def sphere_envelope(eps: np.ndarray, certificate: np.ndarray) -> Dict[str, float]:
    """Least-squares line c(eps) = a + b*eps, shifted up to dominate every rung."""
    slope, intercept = np.polyfit(eps, certificate, 1)
    shift = float(np.max(certificate - (intercept + slope * eps)))
    return {"slope": float(slope), "intercept": float(intercept + max(shift, 0.0))}


def certify_limit(report: SweepReport) -> Dict[str, Any]:
    """
    Passes iff (a) the Cauchy trend is negative on every window, (b) the half-wave residual
    decreases along the ladder for at least min_battery_passes test functions, and (c) the
    sphere certificate decreases along the ladder. Never raises on a failed criterion.
    """
    plan = report.plan
    reasons: List[str] = []

    families = {r.family for r in report.rungs}
    family_ok = len(families) == 1
    if not family_ok:
        reasons.append("inconsistent flow family")

    if len(report.rungs) - 1 >= MIN_PAIRS:
        trend = cauchy_differences(report)
        cauchy_ok = all(w["status"] in ("convergent", "trivially_convergent") for w in trend["windows"].values())
    else:
        trend, cauchy_ok = None, False
    if not cauchy_ok:
        reasons.append("cauchy differences do not shrink on every window")

    battery = report.battery_table()
    per_phi = battery.pivot(index="phi_index", columns="rung", values="halfwave[1]")
    battery_passes = int(sum(_nonincreasing(row) for row in per_phi.to_numpy()))
    battery_ok = battery_passes >= plan.min_battery_passes
    if not battery_ok:
        reasons.append(f"half-wave residual decreases for only {battery_passes} of {len(per_phi)} test functions")

    certificate = report.sphere_certificate
    sphere_ok = _nonincreasing(certificate)
    if not sphere_ok:
        reasons.append("sphere certificate does not decrease along the ladder")
    envelope = sphere_envelope(report.eps, certificate)
    if plan.require_sphere_envelope and envelope["intercept"] > SPHERE_INTERCEPT_TOL:
        reasons.append(f"sphere envelope intercept {envelope['intercept']:.3e} exceeds {SPHERE_INTERCEPT_TOL:g}")

    verdict = {
        "passed": not reasons,
        "reasons": reasons,
        "criteria": {"cauchy": cauchy_ok, "battery": battery_ok, "sphere": sphere_ok, "flow_family": family_ok},
        "battery_passes": battery_passes,
        "sphere_envelope": envelope,
        "cauchy_trend": trend,
    }
    report.verdict = verdict
    logger.info(f"[SWEEP] verdict passed={verdict['passed']} reasons={reasons}")
    return verdict


# ---------- 6) Companion studies ----------
def time_regularity_table(trajectories: Sequence[Trajectory], cutoff: float) -> pd.DataFrame:
    """Per eps: ||P_{<N} u_t||_{L^2_{t,x}} and ||u_t||_{L^2_{t,x}}, sorted by decreasing eps."""
    rows = [{"eps[1]": t.eps, **time_regularity(t, cutoff)} for t in trajectories]
    table = pd.DataFrame(rows).sort_values("eps[1]", ascending=False, ignore_index=True)
    table["low_over_full[1]"] = table["low[1/t]"] / table["full[1/t]"].where(table["full[1/t]"] > 0, np.nan)
    return table


def domain_doubling_study(plan: SweepPlan, rung: Optional[int] = None) -> Dict[str, float]:
    """
    Rerun one rung (the finest by default) on a box of length 2L with 2M points and
    compare against the original box restricted to the same points.
    """
    j = len(plan.eps_ladder) - 1 if rung is None else rung
    cfg = plan.rung_config(j)
    grid = plan.grid
    big_grid = SpectralGrid(2.0 * grid.box_length, 2 * grid.num_points)
    big_cfg = cfg.replace(grid=big_grid)
    small = evolve(make_initial(grid, plan.data), cfg)
    big = evolve(make_initial(big_grid, plan.data), big_cfg)
    offset = grid.num_points // 2
    restricted = big.data[:, :, offset:offset + grid.num_points]
    diff = small.data - restricted
    per_time = grid.spacing * np.sum(diff ** 2, axis=(1, 2))
    result = {
        "eps": cfg.eps,
        "l2_tx_difference": float(np.sqrt(small.time_weights() @ per_time)),
        "final_l2_difference": float(np.sqrt(per_time[-1])),
    }
    logger.info(f"[SWEEP] domain doubling eps={cfg.eps:g} l2_tx={result['l2_tx_difference']:.3e}")
    return result
