"""Acceptance criteria A1 to A9, one test each, at the stated tolerances.

Each test records a single PASS/FAIL line (shown in the terminal summary)
before asserting, so the summary lists failures as well.
"""

import time

import numpy as np
import pytest

from chcontrol.geometry import Grid, TimeGrid
from chcontrol.optimizer import OptimizeConfig
from chcontrol.verification import (
    _continuous_factory,
    dense_gradient_oracle,
    duality_gap_check,
    duality_refinement_check,
    fd_gradient_check,
    inverse_source_problem,
    linearization_order_check,
    mass_balance_check,
    mean_decay_check,
    mean_decay_problem,
    mms_convergence_check,
    neumann_operator_check,
    optimizer_check,
    random_directions,
    reference_directions,
    reference_problem,
    separation_check,
    separation_problem,
    uniform_exactness_check,
)

pytestmark = pytest.mark.acceptance


def test_A1_adjoint_gradient_consistency(record_criterion):
    start = time.perf_counter()
    problem = reference_problem(1, 64, 128, 0.5)
    u, h = reference_directions(problem)
    rep = fd_gradient_check(problem, u, h, eps_list=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6), tol=1e-6)
    seconds = time.perf_counter() - start
    ok = rep.passed and seconds <= 30
    record_criterion("A1", ok, f"best rel. error {min(rep.values):.2e} (<= 1e-6), {seconds:.1f} s (<= 30 s)")
    assert rep.passed, rep.summary()
    assert seconds <= 30


def test_A2_duality_identity(record_criterion):
    problem = reference_problem(2, 16, 16, 0.5)
    u, h = random_directions(problem, seed=1)
    gap = duality_gap_check(problem, u, h, "transpose", tol=1e-10)
    dense = dense_gradient_oracle(problem, u, tol=1e-10)
    refine = duality_refinement_check(_continuous_factory, (128, 256, 512), bracket=(1.5, 2.5))
    ratios = refine.details["ratios"]
    ok = gap.passed and dense.passed and refine.passed
    record_criterion(
        "A2",
        ok,
        f"transpose gap {gap.values[0]:.2e}, dense oracle {dense.values[0]:.2e} (<= 1e-10); "
        f"continuous gap ratios {', '.join(f'{r:.2f}' for r in ratios)} (in [1.5, 2.5])",
    )
    assert gap.passed, gap.summary()
    assert dense.passed, dense.summary()
    assert refine.passed, refine.summary()


def test_A3_remainder_order(record_criterion):
    problem = reference_problem(1, 64, 128, 0.5)
    u, h = reference_directions(problem)
    rep = linearization_order_check(problem, u, h, bracket=(1.8, 2.2))
    slope = rep.details["slope"]
    record_criterion("A3", rep.passed, f"fitted slope {slope:.3f} (in [1.8, 2.2])")
    assert rep.passed, rep.summary()


def _battery_trajectories():
    out = []
    p1 = reference_problem(1, 64, 128, 0.5)
    out.append(("1d reference", p1, reference_directions(p1)[0]))
    p2 = reference_problem(2, 16, 16, 0.5)
    out.append(("2d reference", p2, random_directions(p2, seed=1)[0]))
    ps, us = separation_problem(48, 100)
    out.append(("2d logarithmic", ps, us))
    pi, ui = inverse_source_problem()
    out.append(("inverse source", pi, ui))
    return out


def test_A4_mass_balance(record_criterion):
    worst = 0.0
    reports = []
    for name, problem, u in _battery_trajectories():
        rep = mass_balance_check(problem.state(u), problem.f, problem.params.gamma, tol=1e-12)
        reports.append((name, rep))
        worst = max(worst, rep.values[0])
    decays = []
    for dim, n in ((1, 32), (2, 16)):
        p = mean_decay_problem(dim, n, 32)
        decays.append(mean_decay_check(p.state(p.zeros()), p.params.gamma, tol=1e-12))
    ok = all(r.passed for _, r in reports) and all(d.passed for d in decays)
    record_criterion(
        "A4",
        ok,
        f"worst per-step residual {worst:.2e} over {len(reports)} trajectories, "
        f"f = 0 decay error {max(d.values[0] for d in decays):.2e} (<= 1e-12)",
    )
    for name, rep in reports:
        assert rep.passed, (name, rep.summary())
    for rep in decays:
        assert rep.passed, rep.summary()


def test_A5_uniform_exactness(record_criterion):
    reports = [
        uniform_exactness_check(Grid.uniform(1, 1.0, 32), TimeGrid(1.0, 50), tol=1e-11),
        uniform_exactness_check(Grid.uniform(2, 1.0, 16), TimeGrid(1.0, 50), tol=1e-11),
    ]
    worst = max(max(r.values) for r in reports)
    record_criterion("A5", all(r.passed for r in reports), f"max deviation {worst:.2e} (<= 1e-11) in 1D and 2D")
    for rep in reports:
        assert rep.passed, rep.summary()


def test_A6_strict_separation(record_criterion):
    start = time.perf_counter()
    problem, u = separation_problem(48, 100, c1=2.0)
    rep = separation_check(problem, u)
    seconds = time.perf_counter() - start
    d = rep.details
    finite = bool(d.get("F_max")) and all(np.isfinite(v) for v in d["F_max"])
    ok = rep.passed and finite and d.get("clips") == 0 and seconds <= 300
    margins = ", ".join(f"{m:.3f}" for m in rep.values) or "n/a"
    record_criterion(
        "A6",
        ok,
        f"margins {margins} (> 0), clips {d.get('clips')}, "
        f"max|F^(i)| {', '.join(f'{v:.3g}' for v in d.get('F_max', []))}, {seconds:.1f} s (<= 300 s)",
    )
    assert rep.passed, rep.summary()
    assert finite and d["clips"] == 0
    assert min(rep.values) > 0
    assert seconds <= 300
    assert np.max(np.abs(u)) <= 1.0


def test_A7_optimizer(record_criterion):
    problem, _ = inverse_source_problem(nu=1e-4)
    cfg = OptimizeConfig(max_iters=200, tol=1e-4)
    rep = optimizer_check(problem, cfg, tol_characterization=1e-3)
    stationarity, characterization = rep.values
    d = rep.details
    record_criterion(
        "A7",
        rep.passed,
        f"stationarity {stationarity:.2e} (<= 1e-4) after {d['iterations']} iterations (<= 200), "
        f"monotone {d['monotone']}, projection formula {characterization:.2e} (<= 1e-3)",
    )
    assert rep.passed, rep.summary()


def test_A8_mms_convergence(record_criterion):
    reports = [mms_convergence_check(dim, kind) for dim in (1, 2) for kind in ("time", "space")]
    parts = [f"{r.name} orders {', '.join(f'{q:.2f}' for q in r.details['orders'])}" for r in reports]
    record_criterion("A8", all(r.passed for r in reports), "; ".join(parts) + " (1 +- 0.3 time, 2 +- 0.3 space)")
    for rep in reports:
        assert rep.passed, rep.summary()


def test_A9_neumann_operator(record_criterion):
    reports = [
        neumann_operator_check(grid, seed=seed, method=method)
        for grid in (Grid.uniform(1, 1.0, 64), Grid((1.0, 2.0), (32, 24)))
        for method in ("cg", "dct")
        for seed in (0, 1)
    ]
    inv = max(r.values[0] for r in reports)
    sym = max(r.values[1] for r in reports)
    record_criterion(
        "A9",
        all(r.passed for r in reports),
        f"inverse residual {inv:.2e} (<= 1e-10), symmetry defect {sym:.2e} (<= 1e-12)",
    )
    for rep in reports:
        assert rep.passed, rep.summary()
