"""Reduced cost, adjoint gradient, box projection and projected-gradient descent."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import LineSearchError, PreconditionError
from .geometry import Grid, TimeGrid, norm_q
from .potentials import PotentialSpec
from .sensitivity import AdjointTrajectory, CostData, discrete_adjoint_mode, solve_adjoint
from .state import InitialData, NewtonConfig, PhysicalParams, StateTrajectory, solve_state

log = logging.getLogger(__name__)

# Control u[n] drives the step n -> n+1, so control integrals use the left rule.
CONTROL_RULE = "left"


@dataclass
class ControlBounds:
    u_min: np.ndarray
    u_max: np.ndarray

    def __post_init__(self):
        self.u_min = np.asarray(self.u_min, dtype=float)
        self.u_max = np.asarray(self.u_max, dtype=float)
        if self.u_min.shape != self.u_max.shape:
            raise PreconditionError("u_min and u_max must have the same shape")
        if not (np.all(np.isfinite(self.u_min)) and np.all(np.isfinite(self.u_max))):
            raise PreconditionError("control bounds must be finite")
        if np.any(self.u_min > self.u_max):
            raise PreconditionError("u_min <= u_max violated")

    @classmethod
    def constant(cls, grid: Grid, tgrid: TimeGrid, lo: float, hi: float) -> "ControlBounds":
        shape = (tgrid.steps + 1,) + grid.shape
        return cls(np.full(shape, float(lo)), np.full(shape, float(hi)))


@dataclass(frozen=True)
class OptimizeConfig:
    max_iters: int = 200
    sigma: float = 1e-4
    rho: float = 0.5
    initial_step: float = 1.0
    tol: float = 1e-4
    max_backtracks: int = 40

    def __post_init__(self):
        if not (0 < self.sigma < 1 and 0 < self.rho < 1):
            raise PreconditionError("Armijo parameters sigma and rho must lie in (0, 1)")
        if self.max_iters < 0 or self.initial_step <= 0 or self.tol <= 0:
            raise PreconditionError("max_iters, initial_step and tol must be positive")


@dataclass
class OptimizeTrace:
    cost: list[float] = field(default_factory=list)
    stationarity: list[float] = field(default_factory=list)
    step: list[float] = field(default_factory=list)
    active_fraction: list[float] = field(default_factory=list)
    backtracks: list[int] = field(default_factory=list)
    probe_step: float = float("nan")
    converged: bool = False
    state_solves: int = 0

    @property
    def iterations(self) -> int:
        return max(len(self.cost) - 1, 0)

    def rows(self):
        for k in range(len(self.cost)):
            yield {
                "iter": k,
                "cost": self.cost[k],
                "stationarity": self.stationarity[k],
                "step": self.step[k],
                "active_fraction": self.active_fraction[k],
                "backtracks": self.backtracks[k],
            }


def cost_terms(traj: StateTrajectory, u, cd: CostData) -> dict[str, float]:
    """The seven contributions to the cost, each already multiplied by its weight."""
    grid, tgrid = traj.grid, traj.tgrid
    u = grid.check_series(u, tgrid, "u")
    a = cd.alpha
    dv = grid.cell_volume

    def q_int(arr, rule="right"):
        per = (arr * arr).reshape(len(arr), -1).sum(axis=1)
        return float(np.dot(tgrid.weights(rule), per) * dv)

    def o_int(arr):
        return float(np.sum(arr * arr) * dv)

    phi, w, v = np.asarray(traj.phi), np.asarray(traj.w), np.asarray(traj.v)
    return {
        "phi_Q": 0.5 * a[0] * q_int(phi - cd.phi_Q),
        "phi_T": 0.5 * a[1] * o_int(phi[-1] - cd.phi_Omega),
        "w_Q": 0.5 * a[2] * q_int(w - cd.w_Q),
        "w_T": 0.5 * a[3] * o_int(w[-1] - cd.w_Omega),
        "wdot_Q": 0.5 * a[4] * q_int(v - cd.wdot_Q),
        "wdot_T": 0.5 * a[5] * o_int(v[-1] - cd.wdot_Omega),
        "control": 0.5 * cd.nu * q_int(u, CONTROL_RULE),
    }


def cost(traj: StateTrajectory, u, cd: CostData) -> float:
    """Tracking cost: right rectangle rule in time for state integrals, left for the control."""
    return math.fsum(cost_terms(traj, u, cd).values())


def reduced_gradient(u, traj: StateTrajectory, adj: AdjointTrajectory, nu: float) -> np.ndarray:
    """Nodewise ``r + nu u``; the L2(Q) Riesz representative of the derivative."""
    u = traj.grid.check_series(u, traj.tgrid, "u")
    return adj.r + nu * u


def project(u, bounds: ControlBounds) -> np.ndarray:
    return np.maximum(bounds.u_min, np.minimum(bounds.u_max, u))


def stationarity_residual(u, g, bounds: ControlBounds, s: float, grid: Grid, tgrid: TimeGrid) -> float:
    """``||u - P(u - s g)||`` in L2(Q); zero iff the variational inequality holds."""
    return norm_q(u - project(u - s * g, bounds), grid, tgrid, CONTROL_RULE)


@dataclass
class ControlProblem:
    """Everything that defines the optimal control problem at fixed discretization."""

    grid: Grid
    tgrid: TimeGrid
    params: PhysicalParams
    spec: PotentialSpec
    init: InitialData
    f: np.ndarray
    cost_data: CostData
    bounds: ControlBounds
    newton: NewtonConfig = NewtonConfig()
    adjoint_mode: str = "transpose"

    def __post_init__(self):
        self.adjoint_mode = discrete_adjoint_mode(self.adjoint_mode)
        self.f = self.grid.check_series(self.f, self.tgrid, "f")
        self.cost_data.checked(self.grid, self.tgrid)
        self.grid.check_series(self.bounds.u_min, self.tgrid, "u_min")
        self.grid.check_series(self.bounds.u_max, self.tgrid, "u_max")

    @property
    def control_shape(self) -> tuple[int, ...]:
        return (self.tgrid.steps + 1,) + self.grid.shape

    def zeros(self) -> np.ndarray:
        return np.zeros(self.control_shape)

    def state(self, u) -> StateTrajectory:
        return solve_state(u, self.f, self.params, self.init, self.grid, self.tgrid, self.spec, self.newton)

    def reduced_cost(self, u) -> float:
        return cost(self.state(u), u, self.cost_data)

    def adjoint(self, traj: StateTrajectory, mode: str | None = None) -> AdjointTrajectory:
        return solve_adjoint(traj, self.cost_data, self.params, self.spec, mode or self.adjoint_mode)

    def gradient(self, u, traj: StateTrajectory | None = None, mode: str | None = None):
        """Return ``(g, traj, adj)`` with ``g = r + nu u``."""
        traj = traj if traj is not None else self.state(u)
        adj = self.adjoint(traj, mode)
        return reduced_gradient(u, traj, adj, self.cost_data.nu), traj, adj

    def norm(self, u) -> float:
        return norm_q(u, self.grid, self.tgrid, CONTROL_RULE)


def _active_fraction(u, bounds: ControlBounds) -> float:
    at_bound = (u <= bounds.u_min) | (u >= bounds.u_max)
    return float(np.mean(at_bound[:-1]))


def optimize(problem: ControlProblem, u_init, cfg: OptimizeConfig = OptimizeConfig()):
    """Projected gradient descent with Armijo backtracking.

    Returns ``(u, trace)``.  The probe step used for the stationarity test is
    ``cfg.initial_step / ||g0||`` and stays fixed for the whole run; the
    line-search step starts there and is carried over between iterations.
    """
    bounds = problem.bounds
    u = project(np.asarray(u_init, dtype=float), bounds)
    trace = OptimizeTrace()
    traj = problem.state(u)
    J = cost(traj, u, problem.cost_data)
    g, traj, _ = problem.gradient(u, traj)
    trace.state_solves = 1
    gnorm = problem.norm(g)
    s_probe = cfg.initial_step / gnorm if gnorm > 0 else cfg.initial_step

    def stationarity(u, g):
        res = stationarity_residual(u, g, bounds, s_probe, problem.grid, problem.tgrid)
        return res / max(1.0, problem.norm(u))

    stat = stationarity(u, g)
    trace.probe_step = s_probe
    trace.cost.append(J)
    trace.stationarity.append(stat)
    trace.step.append(0.0)
    trace.active_fraction.append(_active_fraction(u, bounds))
    trace.backtracks.append(0)
    if stat <= cfg.tol:
        trace.converged = True
        return u, trace

    s = s_probe
    for it in range(1, cfg.max_iters + 1):
        for back in range(cfg.max_backtracks + 1):
            u_new = project(u - s * g, bounds)
            d2 = problem.norm(u_new - u) ** 2
            traj_new = problem.state(u_new)
            trace.state_solves += 1
            J_new = cost(traj_new, u_new, problem.cost_data)
            if J_new <= J - (cfg.sigma / s) * d2:
                break
            s *= cfg.rho
        else:
            raise LineSearchError(f"Armijo line search failed at iteration {it}", trace)
        u, J, traj = u_new, J_new, traj_new
        g, traj, _ = problem.gradient(u, traj)
        stat = stationarity(u, g)
        trace.cost.append(J)
        trace.stationarity.append(stat)
        trace.step.append(s)
        trace.active_fraction.append(_active_fraction(u, bounds))
        trace.backtracks.append(back)
        log.debug("iter %d  J=%.10e  stat=%.3e  s=%.3e", it, J, stat, s)
        if stat <= cfg.tol:
            trace.converged = True
            break
    return u, trace
