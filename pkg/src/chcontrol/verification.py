"""Independent checks tying the discrete solvers to the identities they should satisfy.

Every check returns a ``CheckReport``; ``run_battery`` runs them all on the
reference problems defined at the bottom of this module.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.sparse.linalg import splu

from .errors import PreconditionError, SeparationError
from .geometry import Grid, TimeGrid, inner, inner_q, inverse_neumann, mean, norm_l2
from .optimizer import (
    ControlBounds,
    ControlProblem,
    OptimizeConfig,
    cost,
    optimize,
    project,
)
from .potentials import F_eval, PotentialSpec, beta_part, pi_part, separation_report, validate_compatibility
from .sensitivity import CostData, solve_adjoint, solve_linearized, tracking_pairing
from .state import InitialData, NewtonConfig, PhysicalParams, StateTrajectory, _StepSystem, solve_state

log = logging.getLogger(__name__)


@dataclass
class CheckReport:
    """Outcome of one check: measured values per level against a tolerance or bracket."""

    name: str
    values: list[float]
    expected: str
    tolerance: float | tuple[float, float]
    passed: bool
    levels: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def summary(self) -> str:
        shown = ", ".join(f"{v:.3e}" for v in self.values[:8])
        return f"{self.name}: {'PASS' if self.passed else 'FAIL'} [{shown}] expected {self.expected}"

    def as_dict(self) -> dict:
        return _json_safe(asdict(self))


def _json_safe(obj):
    if isinstance(obj, dict):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    return obj


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return 0.0 if scale == 0.0 else abs(a - b) / scale


def _orders(errors) -> list[float]:
    e = np.asarray(errors, dtype=float)
    return [float(np.log2(e[i] / e[i + 1])) for i in range(len(e) - 1)]


# -- gradient and sensitivity checks -----------------------------------------


def fd_gradient_check(
    problem: ControlProblem,
    u,
    h,
    eps_list=(1e-2, 1e-3, 1e-4, 1e-5, 1e-6),
    tol: float = 1e-6,
) -> CheckReport:
    """Compare ``<r + nu u, h>_Q`` with central differences of the reduced cost.

    The reported figure is the smallest relative error over the sweep.
    """
    eps_list = [float(e) for e in eps_list]
    if any(e <= 0 for e in eps_list):
        raise PreconditionError("finite-difference steps must be positive")
    g, _, _ = problem.gradient(u)
    directional = inner_q(g, h, problem.grid, problem.tgrid)
    fds, errors = [], []
    for eps in eps_list:
        fd = (problem.reduced_cost(u + eps * h) - problem.reduced_cost(u - eps * h)) / (2 * eps)
        fds.append(fd)
        errors.append(_rel(directional, fd))
    best = min(errors)
    return CheckReport(
        "fd_gradient",
        errors,
        f"min relative error <= {tol:g}",
        tol,
        best <= tol,
        levels=eps_list,
        details={"adjoint_derivative": directional, "fd": fds, "best": best, "mode": problem.adjoint_mode},
    )


def z_norm(phi_part, w_part, wdot_part, grid: Grid, tgrid: TimeGrid) -> float:
    """Discrete norm of a state increment.

    phi: max-in-time L2 plus L2-in-time of the Laplacian; w: max-in-time L2
    of the value and of its time derivative.
    """
    L = grid.laplacian
    flat = lambda a: np.asarray(a).reshape(tgrid.steps + 1, -1)
    dv = grid.cell_volume
    ph, w, wd = flat(phi_part), flat(w_part), flat(wdot_part)
    max_l2 = lambda a: float(np.sqrt(dv * np.max(np.sum(a * a, axis=1))))
    lap = (L @ ph.T).T
    lap_l2 = float(np.sqrt(dv * np.dot(tgrid.weights("right"), np.sum(lap * lap, axis=1))))
    return max_l2(ph) + lap_l2 + max_l2(w) + max_l2(wd)


def linearization_order_check(
    problem: ControlProblem,
    u,
    h,
    eps_list=(1e-1, 3e-2, 1e-2, 3e-3, 1e-3),
    bracket: tuple[float, float] = (1.8, 2.2),
    zero_tol: float = 1e-12,
) -> CheckReport:
    """Fit the slope of ``||S(u + eps h) - S(u) - eps S'(u)h||_Z`` against eps.

    If every remainder is below ``zero_tol`` (a state that is linear in the
    control, or ``h = 0``) the check passes without a slope.
    """
    base = problem.state(u)
    lin = solve_linearized(h, base, problem.params, problem.spec, "transpose")
    rems = []
    for eps in eps_list:
        pert = problem.state(u + eps * h)
        rems.append(
            z_norm(
                np.asarray(pert.phi) - base.phi - eps * lin.xi,
                np.asarray(pert.w) - base.w - eps * lin.zeta,
                np.asarray(pert.v) - base.v - eps * lin.zdot,
                problem.grid,
                problem.tgrid,
            )
        )
    if max(rems) <= zero_tol:
        return CheckReport(
            "linearization_order", rems, f"remainder <= {zero_tol:g}", zero_tol, True, list(eps_list), {"slope": None}
        )
    slope = float(np.polyfit(np.log(eps_list), np.log(rems), 1)[0])
    return CheckReport(
        "linearization_order",
        rems,
        f"slope in [{bracket[0]}, {bracket[1]}]",
        bracket,
        bracket[0] <= slope <= bracket[1],
        list(eps_list),
        {"slope": slope},
    )


def duality_gap_check(problem: ControlProblem, u, h, mode: str | None = None, tol: float = 1e-10) -> CheckReport:
    """Relative gap between ``<h, r>_Q`` and the linearized tracking pairing."""
    mode = mode or problem.adjoint_mode
    base = problem.state(u)
    lin = solve_linearized(h, base, problem.params, problem.spec, mode)
    adj = solve_adjoint(base, problem.cost_data, problem.params, problem.spec, mode)
    lhs = inner_q(h, adj.r, problem.grid, problem.tgrid)
    rhs = tracking_pairing(base, lin, problem.cost_data)
    gap = _rel(lhs, rhs)
    return CheckReport(
        f"duality_gap_{mode}",
        [gap],
        f"relative gap <= {tol:g}",
        tol,
        gap <= tol,
        levels=[problem.tgrid.steps],
        details={"h_r": lhs, "tracking": rhs, "mode": mode, "shape": list(problem.grid.shape)},
    )


def duality_refinement_check(factory, steps_list=(128, 256, 512), bracket=(1.5, 2.5)) -> CheckReport:
    """Continuous-mode gap under time refinement; each halving of tau should halve it.

    ``factory(steps)`` returns ``(problem, u, h)`` for a given number of steps.
    """
    gaps = []
    for steps in steps_list:
        problem, u, h = factory(steps)
        gaps.append(duality_gap_check(problem, u, h, mode="continuous", tol=np.inf).values[0])
    ratios = [gaps[i] / gaps[i + 1] for i in range(len(gaps) - 1)]
    ok = all(bracket[0] <= q <= bracket[1] for q in ratios)
    return CheckReport(
        "duality_refinement_continuous",
        gaps,
        f"gap ratios in [{bracket[0]}, {bracket[1]}]",
        bracket,
        ok,
        list(steps_list),
        {"ratios": ratios},
    )


def dense_gradient_oracle(problem: ControlProblem, u, tol: float = 1e-10) -> CheckReport:
    """Assemble the tracking gradient densely in forward mode and compare with ``r``.

    Every unit control (one per space-time node) is pushed through the
    differentiated state scheme at once: each step's Newton matrix is
    factored a single time and applied to all columns.  Column j of the
    result, paired with the tracking misfits and divided by its quadrature
    weight, is the L2(Q) representative of the gradient, which must equal
    the transpose-mode adjoint ``r`` on nodes 0..Nt-1.  Cost grows like
    ``(Nt n)^2``; meant for small grids.
    """
    grid, tgrid, params, spec, cd = problem.grid, problem.tgrid, problem.params, problem.spec, problem.cost_data
    base = problem.state(u)
    adj = solve_adjoint(base, cd, params, spec, "transpose")
    Nt, n, tau, a = tgrid.steps, grid.size, tgrid.tau, cd.alpha
    m = Nt * n
    system = _StepSystem(grid, tgrid, params)
    L = system.L
    flat = lambda arr: np.asarray(arr).reshape(Nt + 1, n)
    phi, w, v = flat(base.phi), flat(base.w), flat(base.v)
    mis_phi, mis_w, mis_v = phi - flat(cd.phi_Q), w - flat(cd.w_Q), v - flat(cd.wdot_Q)
    wr = tgrid.weights("right") * grid.cell_volume

    # tangents of phi, w and v for all m unit controls, one column each
    dphi, dw, dv = np.zeros((n, m)), np.zeros((n, m)), np.zeros((n, m))
    grad = np.zeros(m)
    for k in range(Nt):
        lu = splu(system.jacobian(beta_part(spec, phi[k + 1], 2)))
        rhs = np.vstack([
            dphi / tau,
            pi_part(spec, phi[k], 2)[:, None] * dphi,
            dv / tau + params.kappa2 * (L @ dw) + params.lam * dphi / tau,
        ])
        rhs[2 * n + np.arange(n), k * n + np.arange(n)] += 1.0
        x = lu.solve(rhs)
        dphi_new, dv_new = x[:n], x[2 * n :]
        dw = dw + tau * dv_new
        dphi, dv = dphi_new, dv_new
        grad += wr[k + 1] * (a[0] * mis_phi[k + 1] @ dphi + a[2] * mis_w[k + 1] @ dw + a[4] * mis_v[k + 1] @ dv)
    dvol = grid.cell_volume
    grad += dvol * (
        a[1] * (phi[-1] - np.ravel(cd.phi_Omega)) @ dphi
        + a[3] * (w[-1] - np.ravel(cd.w_Omega)) @ dw
        + a[5] * (v[-1] - np.ravel(cd.wdot_Omega)) @ dv
    )
    oracle = grad.reshape(Nt, n) / (tau * dvol)
    r = flat(adj.r)[:Nt]
    err = float(np.max(np.abs(oracle - r)) / max(np.max(np.abs(oracle)), 1e-300))
    return CheckReport(
        "dense_gradient_oracle",
        [err],
        f"max relative difference <= {tol:g}",
        tol,
        err <= tol,
        levels=[[n, Nt]],
    )


# -- state checks ------------------------------------------------------------


def mass_balance_check(traj: StateTrajectory, f, gamma: float, tol: float = 1e-12) -> CheckReport:
    """Per-step residual of ``mean(phi[n+1]) (1 + tau gamma) = mean(phi[n]) + tau mean(f[n+1])``."""
    grid, tgrid = traj.grid, traj.tgrid
    f = grid.check_series(f, tgrid, "f")
    tau = tgrid.tau
    # recompute the means by plain summation, independent of geometry.mean
    m_phi = np.array([math.fsum(s.ravel()) for s in np.asarray(traj.phi)]) / grid.size
    m_f = np.array([math.fsum(s.ravel()) for s in f]) / grid.size
    res = np.abs(m_phi[1:] * (1 + tau * gamma) - m_phi[:-1] - tau * m_f[1:])
    worst = float(res.max())
    return CheckReport(
        "mass_balance",
        [worst],
        f"per-step residual <= {tol:g}",
        tol,
        worst <= tol,
        levels=[tgrid.steps],
        details={"mean_first": float(m_phi[0]), "mean_last": float(m_phi[-1])},
    )


def mean_decay_check(traj: StateTrajectory, gamma: float, tol: float = 1e-12) -> CheckReport:
    """With f = 0 the mean must follow ``mean(phi0) / (1 + tau gamma)^n``."""
    grid, tgrid = traj.grid, traj.tgrid
    means = np.array([mean(s, grid) for s in np.asarray(traj.phi)])
    exact = means[0] / (1 + tgrid.tau * gamma) ** np.arange(tgrid.steps + 1)
    err = float(np.max(np.abs(means - exact)))
    return CheckReport("mean_decay", [err], f"max deviation <= {tol:g}", tol, err <= tol, [tgrid.steps])


def uniform_exactness_check(
    grid: Grid,
    tgrid: TimeGrid,
    params: PhysicalParams = PhysicalParams(),
    spec: PotentialSpec = PotentialSpec("regular"),
    c: float = 0.3,
    w0: float = 0.2,
    theta: float = 0.7,
    tol: float = 1e-11,
) -> CheckReport:
    """Uniform stationary data: phi = c, f = gamma c, u = 0, w = w0 + theta t."""
    shape = (tgrid.steps + 1,) + grid.shape
    init = InitialData.constant(grid, c, w0, theta)
    f = np.full(shape, params.gamma * c)
    traj = solve_state(np.zeros(shape), f, params, init, grid, tgrid, spec)
    t = tgrid.times.reshape((-1,) + (1,) * grid.dim)
    mu = F_eval(spec, c, 1) + params.a - params.b * theta
    errs = [
        float(np.max(np.abs(traj.phi - c))),
        float(np.max(np.abs(traj.mu - mu))),
        float(np.max(np.abs(traj.w - (w0 + theta * t)))),
        float(np.max(np.abs(traj.v - theta))),
    ]
    worst = max(errs)
    return CheckReport(
        "uniform_exactness",
        errs,
        f"max error over phi, mu, w, theta <= {tol:g}",
        tol,
        worst <= tol,
        levels=[list(grid.shape), tgrid.steps],
    )


def separation_check(problem: ControlProblem, u) -> CheckReport:
    """Margins of phi from the singular points and the size of F, F', F'', F'''."""
    spec = problem.spec
    if not spec.singular:
        raise PreconditionError("separation_check needs a singular potential")
    report = validate_compatibility(spec, problem.init.phi0, problem.f, problem.params.gamma)
    if not report.passed:
        return CheckReport(
            "separation", [], "compatible data", 0.0, False, details={"compatibility": report.as_dict()}
        )
    try:
        traj = problem.state(u)
    except SeparationError as exc:
        return CheckReport("separation", [], "no clipping", 0.0, False, details={"error": str(exc), "step": exc.step})
    sep = separation_report(traj.phi, spec)
    maxima = [float(np.max(np.abs(F_eval(spec, np.asarray(traj.phi), i)))) for i in range(4)]
    clips = int(np.sum((traj.phi <= -1 + spec.clip) | (traj.phi >= 1 - spec.clip)))
    ok = sep.separated and clips == 0 and all(math.isfinite(m) for m in maxima)
    return CheckReport(
        "separation",
        [sep.margin_lo, sep.margin_hi],
        "margins > 0, no clipping, F derivatives finite",
        0.0,
        ok,
        levels=[list(problem.grid.shape), problem.tgrid.steps],
        details={"min": sep.min, "max": sep.max, "F_max": maxima, "clips": clips, "compatibility": report.as_dict()},
    )


# -- manufactured solutions --------------------------------------------------


@dataclass
class ManufacturedCase:
    """Smooth exact solution together with the sources that produce it."""

    phi: object
    w: object
    f: object
    u: object
    theta: object
    dim: int

    def sample(self, func, grid: Grid, times) -> np.ndarray:
        coords = grid.coordinates()
        x, y = coords[0], (coords[1] if grid.dim == 2 else 0.0)
        return np.stack([np.broadcast_to(func(x, y, t), grid.shape) for t in times]).astype(float)


def manufactured_case(dim: int, params: PhysicalParams, spec: PotentialSpec) -> ManufacturedCase:
    """Build (phi, w) and the matching (f, u) symbolically; cosines keep Neumann data."""
    import sympy as sy

    x, y, t = sy.symbols("x y t")
    space = [x] if dim == 1 else [x, y]
    bump = sy.cos(sy.pi * x) if dim == 1 else sy.cos(sy.pi * x) * sy.cos(sy.pi * y)
    phi = sy.Rational(3, 10) * bump * sy.exp(-t) + sy.Rational(1, 10) * sy.sin(2 * t)
    w = sy.Rational(1, 2) * bump * sy.sin(3 * t) + t**2 / 4
    r = sy.Symbol("r")
    if spec.variant == "regular":
        dF = r**3 - r
    elif spec.variant == "quadratic":
        dF = r
    else:
        dF = sy.log(1 + r) - sy.log(1 - r) - 2 * spec.c1 * r
    lap = lambda e: sum(sy.diff(e, s, 2) for s in space)
    p = params
    mu = -lap(phi) + dF.subs(r, phi) + p.a - p.b * sy.diff(w, t)
    f = sy.diff(phi, t) - lap(mu) + p.gamma * phi
    u = sy.diff(w, t, 2) - lap(p.kappa1 * sy.diff(w, t) + p.kappa2 * w) + p.lam * sy.diff(phi, t)
    args = (x, y, t)
    make = lambda e: sy.lambdify(args, e, "numpy")
    return ManufacturedCase(make(phi), make(w), make(f), make(u), make(sy.diff(w, t)), dim)


def _mms_error(case: ManufacturedCase, n: int, steps: int, T: float, params, spec) -> float:
    grid = Grid.uniform(case.dim, 1.0, n)
    tgrid = TimeGrid(T, steps)
    times = tgrid.times
    phi_ex, w_ex, th_ex, f, u = (case.sample(fn, grid, times) for fn in (case.phi, case.w, case.theta, case.f, case.u))
    init = InitialData(phi_ex[0], w_ex[0], th_ex[0])
    traj = solve_state(u, f, params, init, grid, tgrid, spec)
    e_phi = max(norm_l2(traj.phi[k] - phi_ex[k], grid) for k in range(steps + 1))
    e_th = max(norm_l2(traj.v[k] - th_ex[k], grid) for k in range(steps + 1))
    return e_phi + e_th


def mms_convergence_check(
    dim: int = 1,
    kind: str = "time",
    levels=None,
    T: float = 0.5,
    params: PhysicalParams = PhysicalParams(),
    spec: PotentialSpec = PotentialSpec("regular"),
    bracket: tuple[float, float] | None = None,
) -> CheckReport:
    """Observed order under refinement against a manufactured solution.

    ``kind="time"`` halves tau on a fine fixed grid (expected order 1);
    ``kind="space"`` halves h with tau proportional to h^2 (expected order 2).
    ``levels`` is a list of ``(n, steps)`` pairs.
    """
    case = manufactured_case(dim, params, spec)
    if levels is None:
        if kind == "time":
            levels = [(256, 8), (256, 16), (256, 32)] if dim == 1 else [(64, 8), (64, 16), (64, 32)]
        else:
            levels = [(8, 32), (16, 128), (32, 512)]
    if bracket is None:
        bracket = (0.7, 1.3) if kind == "time" else (1.7, 2.3)
    errors = [_mms_error(case, n, steps, T, params, spec) for n, steps in levels]
    orders = _orders(errors)
    ok = all(bracket[0] <= q <= bracket[1] for q in orders)
    return CheckReport(
        f"mms_{kind}_{dim}d",
        errors,
        f"observed orders in [{bracket[0]}, {bracket[1]}]",
        bracket,
        ok,
        [list(lv) for lv in levels],
        {"orders": orders, "potential": spec.variant},
    )


# -- inverse Neumann operator ------------------------------------------------


def neumann_operator_check(
    grid: Grid, seed: int = 0, method: str = "cg", tol_inverse: float = 1e-10, tol_symmetry: float = 1e-12
) -> CheckReport:
    """``-L N psi = psi`` and ``<psi, N zeta> = <zeta, N psi>`` on random zero-mean fields.

    The symmetry defect is scaled by ``||psi|| ||N zeta||``.
    """
    rng = np.random.default_rng(seed)
    psi = rng.standard_normal(grid.shape)
    zeta = rng.standard_normal(grid.shape)
    psi -= psi.mean()
    zeta -= zeta.mean()
    n_psi = inverse_neumann(psi, grid, method=method)
    n_zeta = inverse_neumann(zeta, grid, method=method)
    back = -(grid.laplacian @ n_psi.ravel()).reshape(grid.shape)
    inv_err = norm_l2(back - psi, grid) / norm_l2(psi, grid)
    a, b = inner(psi, n_zeta, grid), inner(zeta, n_psi, grid)
    sym_err = abs(a - b) / (norm_l2(psi, grid) * norm_l2(n_zeta, grid))
    return CheckReport(
        f"neumann_operator_{method}",
        [inv_err, sym_err],
        f"inverse <= {tol_inverse:g}, symmetry <= {tol_symmetry:g}",
        (tol_inverse, tol_symmetry),
        inv_err <= tol_inverse and sym_err <= tol_symmetry,
        levels=[list(grid.shape)],
    )


# -- optimizer check ---------------------------------------------------------


def optimizer_check(
    problem: ControlProblem, cfg: OptimizeConfig = OptimizeConfig(), tol_characterization: float = 1e-3
) -> CheckReport:
    """Run projected gradient from zero and test stationarity, monotonicity and the projection formula."""
    u, trace = optimize(problem, problem.zeros(), cfg)
    nu = problem.cost_data.nu
    monotone = bool(np.all(np.diff(trace.cost) <= 0))
    characterization = float("nan")
    if nu > 0:
        g, _, adj = problem.gradient(u)
        characterization = problem.norm(u - project(-adj.r / nu, problem.bounds)) / max(1.0, problem.norm(u))
    ok = trace.converged and monotone and (nu == 0 or characterization <= tol_characterization)
    return CheckReport(
        "optimizer",
        [trace.stationarity[-1], characterization],
        f"stationarity <= {cfg.tol:g} in {cfg.max_iters} iterations, monotone cost, "
        f"projection formula <= {tol_characterization:g}",
        (cfg.tol, tol_characterization),
        ok,
        levels=[trace.iterations],
        details={
            "iterations": trace.iterations,
            "monotone": monotone,
            "cost_first": trace.cost[0],
            "cost_last": trace.cost[-1],
            "state_solves": trace.state_solves,
        },
    )


# -- reference problems ------------------------------------------------------


def reference_problem(
    dim: int = 1,
    n: int = 64,
    steps: int = 128,
    T: float = 0.5,
    variant: str = "regular",
    nu: float = 1e-2,
    adjoint_mode: str = "transpose",
    alpha=(1.0, 1.0, 1.0, 1.0, 1.0, 1.0),
) -> ControlProblem:
    """Smooth tracking problem with all cost terms active and wide bounds."""
    grid = Grid.uniform(dim, 1.0, n)
    tgrid = TimeGrid(T, steps)
    coords = grid.coordinates()
    bump = np.prod([np.cos(np.pi * c) for c in coords], axis=0)
    wave = np.prod([np.cos(2 * np.pi * c) for c in coords], axis=0)
    shape = (steps + 1,) + grid.shape
    init = InitialData(0.3 * bump, np.zeros(grid.shape), np.zeros(grid.shape))
    cd = CostData.zero_targets(grid, tgrid, alpha, nu)
    cd.phi_Q[:] = 0.5 * wave
    cd.phi_Omega[:] = 0.5 * wave
    cd.wdot_Q[:] = 0.1 * bump
    return ControlProblem(
        grid,
        tgrid,
        PhysicalParams(),
        PotentialSpec(variant),
        init,
        np.zeros(shape),
        cd,
        ControlBounds.constant(grid, tgrid, -10.0, 10.0),
        adjoint_mode=adjoint_mode,
    )


def reference_directions(problem: ControlProblem):
    """Deterministic smooth base control ``u`` and direction ``h``."""
    coords = problem.grid.coordinates()
    t = problem.tgrid.times.reshape((-1,) + (1,) * problem.grid.dim)
    T = problem.tgrid.T
    bump = np.prod([np.cos(np.pi * c) for c in coords], axis=0)
    ones = np.ones(problem.grid.shape)
    u = np.sin(np.pi * t / T) * bump[None]
    h = 10.0 * np.cos(3 * t / T) * (ones + np.prod([np.cos(2 * np.pi * c) for c in coords], axis=0))[None]
    return u, h


def random_directions(problem: ControlProblem, seed: int = 0, scale: float = 0.5):
    rng = np.random.default_rng(seed)
    shape = problem.control_shape
    return scale * rng.standard_normal(shape), rng.standard_normal(shape)


def inverse_source_problem(n: int = 32, steps: int = 20, T: float = 0.1, nu: float = 1e-4):
    """Targets generated by a known interior control ``u_dagger``.

    Returns ``(problem, u_dagger)``.  Only the space-time tracking terms for
    phi, w and the temperature are active: the terminal temperature term
    contributes a Hessian eigenvalue of order T, which for nu = 1e-4 would
    make plain projected gradient far too slow.
    """
    alpha = (1.0, 0.0, 1.0, 0.0, 1.0, 0.0)
    grid = Grid.uniform(1, 1.0, n)
    tgrid = TimeGrid(T, steps)
    (x,) = grid.coordinates()
    t = tgrid.times[:, None]
    init = InitialData(0.2 * np.cos(np.pi * x), np.zeros(n), np.zeros(n))
    f = np.zeros((steps + 1, n))
    bounds = ControlBounds.constant(grid, tgrid, -1.0, 1.0)
    u_dagger = 0.4 * (1 + 0.5 * np.cos(np.pi * x))[None] * np.sin(np.pi * t / T)
    params, spec = PhysicalParams(), PotentialSpec("regular")
    truth = solve_state(u_dagger, f, params, init, grid, tgrid, spec)
    cd = CostData(
        alpha,
        nu,
        np.array(truth.phi),
        np.array(truth.w),
        np.array(truth.v),
        np.array(truth.phi[-1]),
        np.array(truth.w[-1]),
        np.array(truth.v[-1]),
    )
    return ControlProblem(grid, tgrid, params, spec, init, f, cd, bounds), u_dagger


def separation_problem(n: int = 48, steps: int = 100, T: float = 1.0, c1: float = 2.0):
    """2D logarithmic problem with a cosine bump initial state and a control bounded by 1.

    Returns ``(problem, u)``.
    """
    grid = Grid.uniform(2, 1.0, n)
    tgrid = TimeGrid(T, steps)
    x, y = grid.coordinates()
    t = tgrid.times[:, None, None]
    bump = np.cos(np.pi * x) * np.cos(np.pi * y)
    init = InitialData(0.2 * bump, np.zeros(grid.shape), np.zeros(grid.shape))
    shape = (steps + 1,) + grid.shape
    cd = CostData.zero_targets(grid, tgrid, (1.0, 0, 0, 0, 0, 0), 0.0)
    problem = ControlProblem(
        grid,
        tgrid,
        PhysicalParams(),
        PotentialSpec("logarithmic", c1=c1),
        init,
        np.zeros(shape),
        cd,
        ControlBounds.constant(grid, tgrid, -1.0, 1.0),
    )
    u = project(np.sin(2 * np.pi * t / T) * np.cos(np.pi * x)[None] * np.ones_like(y)[None], problem.bounds)
    return problem, u


def mean_decay_problem(dim: int = 1, n: int = 32, steps: int = 32) -> ControlProblem:
    """Reference problem with f = 0 and an initial state of nonzero mean."""
    problem = reference_problem(dim, n, steps, 0.5)
    problem.init = InitialData(0.25 + problem.init.phi0, problem.init.w0, problem.init.w1)
    return problem


def _continuous_factory(steps: int):
    problem = reference_problem(1, 32, steps, 0.5, adjoint_mode="continuous")
    u, h = reference_directions(problem)
    return problem, u, h


def run_battery(quick: bool = False) -> list[CheckReport]:
    """Run every check on the reference problems.  ``quick`` shrinks the grids."""
    reports: list[CheckReport] = []

    def timed(fn, *args, **kwargs):
        start = time.perf_counter()
        rep = fn(*args, **kwargs)
        rep.details["seconds"] = time.perf_counter() - start
        log.info(rep.summary())
        reports.append(rep)
        return rep

    n1, s1 = (32, 32) if quick else (64, 128)
    p1 = reference_problem(1, n1, s1, 0.5)
    u1, h1 = reference_directions(p1)
    timed(fd_gradient_check, p1, u1, h1)
    timed(linearization_order_check, p1, u1, h1)
    timed(mass_balance_check, p1.state(u1), p1.f, p1.params.gamma)

    p2 = reference_problem(2, 8 if quick else 16, 8 if quick else 16, 0.5)
    u2, h2 = random_directions(p2, seed=1)
    timed(duality_gap_check, p2, u2, h2, "transpose")
    timed(mass_balance_check, p2.state(u2), p2.f, p2.params.gamma)

    timed(dense_gradient_oracle, p2, u2)

    timed(duality_refinement_check, _continuous_factory)

    g1 = Grid.uniform(1, 1.0, 16)
    timed(uniform_exactness_check, g1, TimeGrid(1.0, 20))
    decay = mean_decay_problem()
    timed(mean_decay_check, decay.state(decay.zeros()), decay.params.gamma)

    sp_problem, sp_u = separation_problem(24 if quick else 48, 40 if quick else 100)
    timed(separation_check, sp_problem, sp_u)
    timed(mass_balance_check, sp_problem.state(sp_u), sp_problem.f, sp_problem.params.gamma)

    timed(mms_convergence_check, 1, "time")
    timed(mms_convergence_check, 1, "space")
    if not quick:
        timed(mms_convergence_check, 2, "time")
        timed(mms_convergence_check, 2, "space")

    for grid in (Grid.uniform(1, 1.0, 64), Grid.uniform(2, 1.0, 32)):
        timed(neumann_operator_check, grid)

    inv_problem, u_dagger = inverse_source_problem()
    timed(mass_balance_check, inv_problem.state(u_dagger), inv_problem.f, inv_problem.params.gamma)
    timed(optimizer_check, inv_problem)
    return reports
