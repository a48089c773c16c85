"""Command line interface: ``chcontrol <subcommand> ...``.

Exit status: 0 success, 1 a check did not pass, 2 configuration or missing
artifacts, 3 state solve failure, 4 linearized/adjoint failure, 5 stalled
line search.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import io
from .config import OUTPUT_ROOT_ENV, RunConfig, parse_config
from .errors import (
    CHControlError,
    ConfigError,
    LineSearchError,
    PreconditionError,
    SensitivityError,
    StateSolveError,
)
from .geometry import mean
from .optimizer import cost_terms, optimize, project
from .potentials import F_eval, separation_report
from .state import StateTrajectory, residual_report
from .verification import (
    duality_gap_check,
    duality_refinement_check,
    fd_gradient_check,
    mass_balance_check,
    run_battery,
)

log = logging.getLogger("chcontrol")

EXIT_OK, EXIT_CHECK_FAILED, EXIT_CONFIG, EXIT_STATE, EXIT_SENSITIVITY, EXIT_LINE_SEARCH = 0, 1, 2, 3, 4, 5


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, (ConfigError, PreconditionError, io.ArtifactError)):
        return EXIT_CONFIG
    if isinstance(exc, StateSolveError):
        return EXIT_STATE
    if isinstance(exc, SensitivityError):
        return EXIT_SENSITIVITY
    if isinstance(exc, LineSearchError):
        return EXIT_LINE_SEARCH
    return EXIT_CHECK_FAILED


def _run_dir(cfg: RunConfig, subcommand: str) -> Path:
    path = cfg.output_root / f"{cfg.name}-{subcommand}"
    path.mkdir(parents=True, exist_ok=True)
    return path


def _base_summary(cfg: RunConfig, subcommand: str) -> dict:
    return {
        "subcommand": subcommand,
        "config_path": str(cfg.path) if cfg.path else None,
        "config_hash": cfg.config_hash,
        "config": cfg.resolved,
        "grid": {"lengths": list(cfg.grid.lengths), "nodes": list(cfg.grid.nodes)},
        "time": {"T": cfg.tgrid.T, "steps": cfg.tgrid.steps},
    }


def _timeseries_rows(traj: StateTrajectory, u, cfg: RunConfig) -> list[dict]:
    """Per time node: statistics of phi and theta and the local tracking integrands."""
    grid, cd = traj.grid, cfg.cost
    dv = grid.cell_volume
    half_sq = lambda arr: 0.5 * float(np.sum(arr * arr)) * dv
    rows = []
    for k, t in enumerate(traj.tgrid.times):
        phi = traj.phi[k]
        rows.append(
            {
                "t": float(t),
                "mean_phi": mean(phi, grid),
                "min_phi": float(phi.min()),
                "max_phi": float(phi.max()),
                "mean_theta": mean(traj.v[k], grid),
                "phi_Q": cd.alpha[0] * half_sq(phi - cd.phi_Q[k]),
                "w_Q": cd.alpha[2] * half_sq(traj.w[k] - cd.w_Q[k]),
                "wdot_Q": cd.alpha[4] * half_sq(traj.v[k] - cd.wdot_Q[k]),
                "control": cd.nu * half_sq(u[k]),
            }
        )
    return rows


def _state_artifacts(run_dir: Path, traj: StateTrajectory, u, cfg: RunConfig, index: list) -> dict:
    times = traj.tgrid.times
    for name, series in (("phi", traj.phi), ("mu", traj.mu), ("w", traj.w), ("theta", traj.v)):
        io.write_series(run_dir, name, series, times, cfg.stride, index)
    io.write_csv(run_dir / "timeseries.csv", _timeseries_rows(traj, u, cfg))
    res = residual_report(traj, u, cfg.f, cfg.params, cfg.spec)
    out = {
        "cost_terms": cost_terms(traj, u, cfg.cost),
        "newton_iterations_max": int(traj.newton_iterations.max()),
        "residual_max": res.max,
        "mu0_laplacian_norm": traj.mu0_laplacian_norm,
    }
    if cfg.spec.singular:
        sep = separation_report(traj.phi, cfg.spec)
        out["separation"] = {
            "min": sep.min,
            "max": sep.max,
            "margin_lo": sep.margin_lo,
            "margin_hi": sep.margin_hi,
            "F_max": [float(np.max(np.abs(F_eval(cfg.spec, np.asarray(traj.phi), i)))) for i in range(4)],
        }
    return out


def cmd_simulate(cfg: RunConfig, args) -> int:
    run_dir = _run_dir(cfg, "simulate")
    problem = cfg.problem()
    start = time.perf_counter()
    traj = problem.state(cfg.u)
    summary = _base_summary(cfg, "simulate")
    index: list = []
    summary.update(_state_artifacts(run_dir, traj, cfg.u, cfg, index))
    report = mass_balance_check(traj, cfg.f, cfg.params.gamma)
    summary["reports"] = [report.as_dict()]
    summary["seconds"] = time.perf_counter() - start
    io.write_index(run_dir, index)
    io.write_summary(run_dir, summary)
    print(f"simulate: {cfg.tgrid.steps} steps on {cfg.grid.shape}, results in {run_dir}")
    return EXIT_OK


def cmd_optimize(cfg: RunConfig, args) -> int:
    run_dir = _run_dir(cfg, "optimize")
    problem = cfg.problem()
    start = time.perf_counter()
    try:
        u, trace = optimize(problem, cfg.u, cfg.optimize)
    except LineSearchError as exc:
        if exc.trace is not None and exc.trace.cost:
            io.write_csv(run_dir / "trace.csv", list(exc.trace.rows()))
        raise
    io.write_csv(run_dir / "trace.csv", list(trace.rows()))
    g, traj, adj = problem.gradient(u)
    index: list = []
    io.write_series(run_dir, "u", u, cfg.tgrid.times, 1, index)
    summary = _base_summary(cfg, "optimize")
    summary.update(_state_artifacts(run_dir, traj, u, cfg, index))
    nu = cfg.cost.nu
    summary["optimizer"] = {
        "converged": trace.converged,
        "iterations": trace.iterations,
        "final_cost": trace.cost[-1],
        "stationarity": trace.stationarity[-1],
        "probe_step": trace.probe_step,
        "state_solves": trace.state_solves,
        "projection_formula": (
            problem.norm(u - project(-adj.r / nu, cfg.bounds)) / max(1.0, problem.norm(u)) if nu > 0 else None
        ),
    }
    summary["reports"] = [mass_balance_check(traj, cfg.f, cfg.params.gamma).as_dict()]
    summary["seconds"] = time.perf_counter() - start
    io.write_index(run_dir, index)
    io.write_summary(run_dir, summary)
    print(
        f"optimize: {trace.iterations} iterations, cost {trace.cost[0]:.6e} -> {trace.cost[-1]:.6e}, "
        f"stationarity {trace.stationarity[-1]:.3e}, results in {run_dir}"
    )
    return EXIT_OK if trace.converged else EXIT_CHECK_FAILED


def cmd_grad_check(cfg: RunConfig, args) -> int:
    run_dir = _run_dir(cfg, "grad-check")
    eps_list = args.eps_list or cfg.eps_list
    report = fd_gradient_check(cfg.problem(), cfg.u, cfg.direction, eps_list)
    summary = _base_summary(cfg, "grad-check")
    summary["reports"] = [report.as_dict()]
    io.write_summary(run_dir, summary)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_adjoint_check(cfg: RunConfig, args) -> int:
    run_dir = _run_dir(cfg, "adjoint-check")
    mode = args.mode or cfg.adjoint_mode
    if mode == "transpose":
        report = duality_gap_check(cfg.problem(), cfg.u, cfg.direction, "transpose")
    else:
        base = cfg.tgrid.steps

        def factory(steps):
            c = cfg.with_steps(steps)
            return c.problem(), c.u, c.direction

        report = duality_refinement_check(factory, (base, 2 * base, 4 * base))
    summary = _base_summary(cfg, "adjoint-check")
    summary["reports"] = [report.as_dict()]
    io.write_summary(run_dir, summary)
    print(report.summary())
    return EXIT_OK if report.passed else EXIT_CHECK_FAILED


def cmd_battery(args) -> int:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV) or "runs")
    run_dir = root / ("battery-quick" if args.quick else "battery")
    run_dir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    reports = run_battery(quick=args.quick)
    for rep in reports:
        print(rep.summary())
    passed = all(r.passed for r in reports)
    io.write_summary(
        run_dir,
        {
            "subcommand": "battery",
            "quick": args.quick,
            "passed": passed,
            "reports": [r.as_dict() for r in reports],
            "seconds": time.perf_counter() - start,
        },
    )
    print(f"battery: {sum(r.passed for r in reports)}/{len(reports)} checks passed, summary in {run_dir}")
    return EXIT_OK if passed else EXIT_CHECK_FAILED


def cmd_emit_plots(args) -> int:
    files = io.emit_plot_data(args.run_dir)
    print(f"emit-plots: wrote {len(files)} files to {Path(args.run_dir) / 'plot'}")
    return EXIT_OK


def _eps_list(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a list of numbers: {text!r}") from None
    if not values or any(v <= 0 for v in values):
        raise argparse.ArgumentTypeError("eps values must be positive")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chcontrol",
        description="Optimal heat-source control of a nonisothermal Cahn-Hilliard system.",
        epilog=f"Set {OUTPUT_ROOT_ENV} to override the output root of every run.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("simulate", "forward solve for the configured control"),
        ("optimize", "projected-gradient optimization of the control"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path)

    p = sub.add_parser("grad-check", help="adjoint gradient against central finite differences")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--eps-list", type=_eps_list, default=None, help='e.g. "1e-2 1e-4 1e-6"')

    p = sub.add_parser("adjoint-check", help="duality identity between linearized and adjoint solves")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--mode", choices=("transpose", "continuous"), default=None)

    p = sub.add_parser("battery", help="run every verification check on the reference problems")
    p.add_argument("--quick", action="store_true", help="smaller grids")

    p = sub.add_parser("emit-plots", help="write gnuplot column files for a finished run")
    p.add_argument("run_dir", type=Path)
    return parser


COMMANDS = {
    "simulate": cmd_simulate,
    "optimize": cmd_optimize,
    "grad-check": cmd_grad_check,
    "adjoint-check": cmd_adjoint_check,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "battery":
            return cmd_battery(args)
        if args.command == "emit-plots":
            return cmd_emit_plots(args)
        cfg = parse_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except CHControlError as exc:
        print(f"chcontrol: error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
