# lab_cli.py
"""
Command-line entry point of the half-wave maps lab.

    python lab_cli.py simulate     --config configs/minimal.toml --output runs/minimal
    python lab_cli.py picard-check --config configs/picard.toml
    python lab_cli.py sweep        --config configs/sweep_acceptance.toml
    python lab_cli.py weakres      --config configs/minimal.toml --trajectory runs/minimal/trajectory
    python lab_cli.py lp-split     --config configs/minimal.toml
    python lab_cli.py selftest

Exit codes: 0 pass, 1 failing verdict, 2 bad usage or unreadable input (config or trajectory).
Diagnostics go to standard error; data goes to files listed in manifest.json.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd

from analysis.diagnostics import (
    commutator_decay,
    constraint_equation_residual,
    critical_energy_rate_residual,
    critical_energy_report,
    energy_identity_residual,
    far_field_envelope,
    h12_uniform_bound,
    max_principle_report,
    parabolic_boundary_report,
    run_diagnostics,
    tail_norm,
)
from analysis.sweep import certify_limit, run_viscosity_sweep, time_regularity_table
from analysis.weak_form import battery_residuals, canonical_battery
from dynamics.initial_data import make_initial, verify_admissibility
from dynamics.solver import evolve, matched_evolve_config, picard_local_solve, picard_ratio_trend
from lab_io.config import RunConfig, config_to_dict, parse_config
from lab_io.manifest import CODE_VERSION, ArtifactWriter
from lab_io.selftest import run_selftest
from lab_io.snapshots import read_trajectory
from spectral.errors import ConfigError, LabError, SnapshotError, SweepAbortedError
from spectral.fields import VectorField3, l2_norm

logger = logging.getLogger("lab_cli")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2
COMMUTATOR_MAX_EXPONENT = -0.8
PICARD_AGREEMENT_TOL = 1e-4


# ---------- 1) Subcommands ----------
def _writer(cfg: RunConfig, args, command: str) -> ArtifactWriter:
    out = args.output or Path(cfg.run.output_dir) / command
    return ArtifactWriter(out, command, config_to_dict(cfg))


def cmd_simulate(cfg: RunConfig, args) -> int:
    writer = _writer(cfg, args, "simulate")
    u0 = make_initial(cfg.grid, cfg.data)
    admissible = verify_admissibility(u0, cfg.data)
    traj = evolve(u0, cfg.solver)

    series = run_diagnostics(
        traj,
        cfg.data.q,
        cfg.far_field_radius,
        cutoffs=cfg.diagnostics.tail_cutoffs,
        center=cfg.data.center,
        max_workers=cfg.run.pool_size,
    )
    tails = tail_norm(traj, cfg.diagnostics.tail_cutoffs)
    mp = max_principle_report(traj)
    ec = critical_energy_report(traj)
    h12 = h12_uniform_bound(traj)
    window = parabolic_boundary_report(traj, cfg.far_field_radius, cfg.data.center)

    writer.trajectory("trajectory", traj)
    writer.snapshot("final.hwm", traj.final)
    writer.csv("diagnostics.csv", series)
    writer.csv("tails.csv", tails)
    writer.csv("far_field.csv", far_field_envelope(traj, cfg.data.q, cfg.far_field_radius / 2.0, cfg.data.center))

    reports: Dict[str, Any] = {
        "admissibility": admissible,
        "max_principle": mp,
        "critical_energy": ec,
        "h12_uniform": h12,
        "parabolic_boundary": window,
    }
    if cfg.diagnostics.identities and len(traj) >= 3:
        interior = traj.times[1:-1]
        writer.csv(
            "identities.csv",
            pd.DataFrame(
                {
                    "time[t]": interior,
                    "energy_identity[1]": energy_identity_residual(traj),
                    "v_equation[1]": constraint_equation_residual(traj),
                    "critical_energy_rate[1]": critical_energy_rate_residual(traj),
                }
            ),
        )
    if cfg.diagnostics.battery:
        writer.csv("battery.csv", battery_residuals(traj, max_workers=cfg.run.pool_size))
    writer.json("reports.json", reports)

    checks = {
        "admissible": admissible["passed"],
        "max_principle": mp["passed"],
        "critical_energy_monotone": ec["passed"],
        "h12_uniform": h12["passed"],
        "tail_bound": not bool(tails["violated"].any()),
    }
    return _finish(writer, checks)


def cmd_picard_check(cfg: RunConfig, args) -> int:
    writer = _writer(cfg, args, "picard-check")
    u0 = make_initial(cfg.grid, cfg.data)
    fixed_point, report = picard_local_solve(u0, cfg.solver)
    marched = evolve(u0, matched_evolve_config(cfg.solver)).final
    agreement = l2_norm(fixed_point - marched)
    trend = picard_ratio_trend(u0, cfg.solver, halvings=2)
    ratios = [ratio for _, ratio in trend]

    writer.snapshot("fixed_point.hwm", fixed_point)
    writer.csv(
        "picard_iterates.csv",
        pd.DataFrame(
            {
                "iterate": np.arange(1, len(report.xT_differences) + 1),
                "xT_difference[1]": report.xT_differences,
                "ratio[1]": [np.nan] * (len(report.xT_differences) - len(report.contraction_ratios))
                + report.contraction_ratios,
            }
        ),
    )
    writer.csv("picard_trend.csv", pd.DataFrame(trend, columns=["window[t]", "geometric_ratio[1]"]))
    writer.json("picard.json", {**report.as_dict(), "agreement_l2": agreement})

    checks = {
        "converged": report.converged,
        "contracts": report.geometric_ratio < 1.0,
        "heat_bounds": report.heat_bounds_hold,
        "agrees_with_evolve": agreement <= PICARD_AGREEMENT_TOL,
        "ratio_shrinks_with_window": all(b < a for a, b in zip(ratios, ratios[1:]) if a > 0),
    }
    return _finish(writer, checks)


def cmd_sweep(cfg: RunConfig, args) -> int:
    writer = _writer(cfg, args, "sweep")
    plan = cfg.sweep_plan()
    try:
        report = run_viscosity_sweep(plan, max_workers=cfg.run.pool_size)
    except SweepAbortedError as exc:
        partial = exc.partial_report
        if partial is not None and partial.rungs:
            writer.csv("summary.csv", partial.summary_table())
        writer.finish({"passed": False, "reasons": [str(exc)]})
        logger.error(f"[CLI] {exc}")
        return EXIT_FAIL

    verdict = certify_limit(report)
    writer.csv("summary.csv", report.summary_table())
    writer.csv("cauchy.csv", report.cauchy)
    writer.csv("battery.csv", report.battery_table())
    writer.csv(
        "time_regularity.csv",
        time_regularity_table([r.trajectory for r in report.rungs], min(plan.paired_cutoffs)),
    )
    writer.json("verdict.json", verdict)
    writer.finish(verdict)
    logger.info(f"[CLI] sweep passed={verdict['passed']}")
    return EXIT_PASS if verdict["passed"] else EXIT_FAIL


def cmd_weakres(cfg: RunConfig, args) -> int:
    if args.trajectory is None:
        raise ConfigError("weakres needs --trajectory pointing at a stored trajectory directory")
    writer = _writer(cfg, args, "weakres")
    traj = read_trajectory(args.trajectory, cfg.solver)
    table = battery_residuals(traj, max_workers=cfg.run.pool_size)
    writer.csv("battery.csv", table)
    writer.finish({"passed": True, "max_regularized": float(table["regularized[1]"].max())})
    return EXIT_PASS


def cmd_lp_split(cfg: RunConfig, args) -> int:
    writer = _writer(cfg, args, "lp-split")
    if args.trajectory is not None:
        traj = read_trajectory(args.trajectory, cfg.solver)
    else:
        traj = evolve(make_initial(cfg.grid, cfg.data), cfg.solver)
    tails = tail_norm(traj, cfg.diagnostics.tail_cutoffs)

    battery = canonical_battery(cfg.grid, traj.final_time)
    # temporal profile is irrelevant for a single slice; keep one per spatial bump and direction
    slices = {(phi.center, phi.radius, phi.direction): phi for phi in battery}
    rows, exponents = [], []
    for phi in slices.values():
        exponent, table = commutator_decay(traj.final, VectorField3(cfg.grid, phi.psi()), cfg.diagnostics.commutator_cutoffs)
        exponents.append(exponent)
        table.insert(0, "phi", phi.label)
        rows.append(table)
    writer.csv("tails.csv", tails)
    writer.csv("commutators.csv", pd.concat(rows, ignore_index=True))
    writer.csv(
        "commutator_exponents.csv",
        pd.DataFrame({"phi": [p.label for p in slices.values()], "exponent[1]": exponents}),
    )
    checks = {
        "tail_bound": not bool(tails["violated"].any()),
        "commutator_decay": all(e <= COMMUTATOR_MAX_EXPONENT for e in exponents),
    }
    return _finish(writer, checks)


def _finish(writer: ArtifactWriter, checks: Dict[str, bool]) -> int:
    passed = all(checks.values())
    writer.finish({"passed": passed, "checks": checks})
    failed = [name for name, ok in checks.items() if not ok]
    if failed:
        logger.warning(f"[CLI] failed checks={failed}")
    return EXIT_PASS if passed else EXIT_FAIL


COMMANDS: Dict[str, Callable[[RunConfig, argparse.Namespace], int]] = {
    "simulate": cmd_simulate,
    "picard-check": cmd_picard_check,
    "sweep": cmd_sweep,
    "weakres": cmd_weakres,
    "lp-split": cmd_lp_split,
}


# ---------- 2) Argument parsing ----------
def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lab_cli.py", description="Half-wave maps regularization lab")
    parser.add_argument("--version", action="version", version=CODE_VERSION)
    parser.add_argument("--log-level", default="info", choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, required=True, help="TOML run configuration")
        p.add_argument("--output", type=Path, default=None, help="output directory (default: [run] output_dir/<command>)")
        if name in ("weakres", "lp-split"):
            p.add_argument("--trajectory", type=Path, default=None, help="stored trajectory directory")
    p = sub.add_parser("selftest")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", type=Path, default=None, help="optional directory for selftest.csv")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, args.log_level.upper()),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    if args.command == "selftest":
        table = run_selftest(args.seed)
        if args.output is not None:
            writer = ArtifactWriter(args.output, "selftest", {"seed": args.seed})
            writer.csv("selftest.csv", table)
            return _finish(writer, dict(zip(table["check"], table["passed"])))
        return EXIT_PASS if bool(table["passed"].all()) else EXIT_FAIL

    try:
        cfg = parse_config(args.config)
    except (ConfigError, FileNotFoundError) as exc:
        logger.error(f"[CLI] config error: {exc}")
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        logger.error(f"[CLI] config error: {exc}")
        return EXIT_USAGE
    except (FileNotFoundError, SnapshotError) as exc:
        logger.error(f"[CLI] unreadable input: {exc}")
        return EXIT_USAGE
    except LabError as exc:
        logger.error(f"[CLI] {args.command} failed: {exc}")
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
