"""Forward solver for the nonisothermal Cahn-Hilliard system with source term.

Time stepping is implicit Euler with a convex split of the potential.  The
second-order equation for the thermal displacement ``w`` is carried as the
first-order pair ``(w, v)`` with ``v = dw/dt`` (the temperature).  One step
n -> n+1 solves for ``(phi, mu, v)`` at n+1::

    (phi' - phi)/tau - L mu' + gamma phi'                    = f[n+1]
    mu' + L phi' - beta(phi') - pi(phi) - a + b v'           = 0
    (v' - v)/tau - L(k1 v' + k2 w') + lam (phi' - phi)/tau   = u[n]
    w' = w + tau v'

The control sampled at the left end of each interval is what makes the
transposed (discrete) adjoint line up node by node with the control, see
``sensitivity``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import PreconditionError, SeparationError, StateSolveError
from .geometry import Grid, TimeGrid
from .potentials import F_eval, PotentialSpec, beta_part, pi_part, validate_compatibility

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PhysicalParams:
    gamma: float = 1.0
    a: float = 0.1
    b: float = 0.5
    kappa1: float = 1.0
    kappa2: float = 1.0
    lam: float = 1.0

    def __post_init__(self):
        bad = {k: v for k, v in self.__dict__.items() if not (np.isfinite(v) and v > 0)}
        if bad:
            raise PreconditionError(f"structural constants must be positive: {bad}")


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 30
    # an update below step_tol * (1 + |x|) means the residual sits at its rounding floor
    step_tol: float = 1e-14


@dataclass
class InitialData:
    phi0: np.ndarray
    w0: np.ndarray
    w1: np.ndarray

    @classmethod
    def constant(cls, grid: Grid, phi0: float = 0.0, w0: float = 0.0, w1: float = 0.0) -> "InitialData":
        return cls(np.full(grid.shape, phi0), np.full(grid.shape, w0), np.full(grid.shape, w1))

    def checked(self, grid: Grid) -> "InitialData":
        return InitialData(grid.check(self.phi0, "phi0"), grid.check(self.w0, "w0"), grid.check(self.w1, "w1"))


@dataclass
class StateTrajectory:
    """Solution slices at the time nodes plus per-step Newton diagnostics."""

    grid: Grid
    tgrid: TimeGrid
    phi: np.ndarray
    mu: np.ndarray
    w: np.ndarray
    v: np.ndarray
    newton_iterations: np.ndarray = field(default=None)
    newton_residuals: np.ndarray = field(default=None)
    mu0_laplacian_norm: float = float("nan")

    def freeze(self) -> "StateTrajectory":
        for arr in (self.phi, self.mu, self.w, self.v):
            arr.setflags(write=False)
        return self


def temperature(traj: StateTrajectory) -> np.ndarray:
    """The temperature theta = dw/dt, stored as ``v``."""
    return traj.v


class _StepSystem:
    """Constant part of the per-step Jacobian for the (phi, mu, v) block."""

    def __init__(self, grid: Grid, tgrid: TimeGrid, params: PhysicalParams):
        n = grid.size
        tau = tgrid.tau
        L = grid.laplacian
        I = sp.identity(n, format="csr")
        p = params
        self.n = n
        self.tau = tau
        self.L = L
        self.params = params
        self.heat = (1.0 / tau) * I - (p.kappa1 + tau * p.kappa2) * L
        self.base = sp.bmat(
            [
                [(1.0 / tau + p.gamma) * I, -L, None],
                [L, I, p.b * I],
                [(p.lam / tau) * I, None, self.heat],
            ],
            format="csc",
        )
        # size of the rounding noise in a residual evaluation, per unit of |x|
        self.noise = 100 * np.finfo(float).eps * float(abs(self.base).sum(axis=1).max())

    def jacobian(self, dbeta: np.ndarray) -> sp.csc_matrix:
        band = np.zeros(2 * self.n)
        band[: self.n] = dbeta
        return (self.base - sp.diags(band, -self.n, shape=self.base.shape)).tocsc()


def solve_state(
    u,
    f,
    params: PhysicalParams,
    init: InitialData,
    grid: Grid,
    tgrid: TimeGrid,
    spec: PotentialSpec,
    newton: NewtonConfig = NewtonConfig(),
    check_compatibility: bool = True,
) -> StateTrajectory:
    u = grid.check_series(u, tgrid, "u")
    f = grid.check_series(f, tgrid, "f")
    init = init.checked(grid)
    if check_compatibility and spec.singular:
        report = validate_compatibility(spec, init.phi0, f, params.gamma)
        if not report.passed:
            failed = [i.name for i in report.items if not i.ok]
            raise PreconditionError(f"compatibility condition fails for {failed}")

    system = _StepSystem(grid, tgrid, params)
    n, tau, L, p = system.n, system.tau, system.L, params
    Nt = tgrid.steps

    phi = np.empty((Nt + 1, n))
    mu = np.empty((Nt + 1, n))
    w = np.empty((Nt + 1, n))
    v = np.empty((Nt + 1, n))
    phi[0] = init.phi0.ravel()
    w[0] = init.w0.ravel()
    v[0] = init.w1.ravel()
    mu[0] = -(L @ phi[0]) + F_eval(spec, spec.clamp(phi[0]), 1) + p.a - p.b * v[0]
    iterations = np.zeros(Nt, dtype=int)
    residuals = np.zeros(Nt)

    fr = f.reshape(Nt + 1, n)
    ur = u.reshape(Nt + 1, n)
    for k in range(Nt):
        x, its, res = _newton_step(system, spec, newton, phi[k], mu[k], w[k], v[k], fr[k + 1], ur[k], step=k)
        phi[k + 1], mu[k + 1], v[k + 1] = x[:n], x[n : 2 * n], x[2 * n :]
        w[k + 1] = w[k] + tau * v[k + 1]
        iterations[k] = its
        residuals[k] = res

    shape = (Nt + 1,) + grid.shape
    traj = StateTrajectory(
        grid,
        tgrid,
        phi.reshape(shape),
        mu.reshape(shape),
        w.reshape(shape),
        v.reshape(shape),
        iterations,
        residuals,
        mu0_laplacian_norm=float(np.sqrt(grid.cell_volume) * np.linalg.norm(L @ mu[0])),
    )
    return traj.freeze()


def _step_residual(system: _StepSystem, spec, x, phi, w, v, f_next, u_now):
    n, tau, L, p = system.n, system.tau, system.L, system.params
    ph, m, vv = x[:n], x[n : 2 * n], x[2 * n :]
    dphi = (ph - phi) / tau
    g1 = dphi - L @ m + p.gamma * ph - f_next
    g2 = m + L @ ph - beta_part(spec, spec.clamp(ph), 1) - pi_part(spec, phi, 1) - p.a + p.b * vv
    g3 = (vv - v) / tau - L @ (p.kappa1 * vv + p.kappa2 * (w + tau * vv)) + p.lam * dphi - u_now
    return np.concatenate([g1, g2, g3])


def _newton_step(system, spec, cfg: NewtonConfig, phi, mu, w, v, f_next, u_now, step: int):
    x = np.concatenate([phi, mu, v])
    G = _step_residual(system, spec, x, phi, w, v, f_next, u_now)
    res = float(np.max(np.abs(G)))
    n = system.n
    for it in range(cfg.max_iter + 1):
        if res <= cfg.tol:
            break
        if it == cfg.max_iter:
            raise StateSolveError(
                f"Newton did not converge in step {step} after {cfg.max_iter} iterations",
                residual=res,
                step=step,
            )
        J = system.jacobian(beta_part(spec, spec.clamp(x[:n]), 2))
        dx = splu(J).solve(-G)
        if np.max(np.abs(dx)) <= cfg.step_tol * (1.0 + np.max(np.abs(x))):
            break
        t = 1.0
        for _ in range(cfg.max_halvings):
            x_new = x + t * dx
            G_new = _step_residual(system, spec, x_new, phi, w, v, f_next, u_now)
            res_new = float(np.max(np.abs(G_new)))
            if res_new < res:
                break
            t *= 0.5
        else:
            if res <= system.noise * (1.0 + np.max(np.abs(x))):
                break  # stalled at the rounding floor
            raise StateSolveError(f"Newton damping failed in step {step}", residual=res, step=step)
        x, G, res = x_new, G_new, res_new
    if spec.singular:
        lo, hi = spec.bounds
        ph = x[:n]
        if np.any(ph <= lo + spec.clip) or np.any(ph >= hi - spec.clip):
            raise SeparationError(
                f"clipping active at converged step {step}: phi in [{ph.min():.12g}, {ph.max():.12g}]",
                residual=res,
                step=step,
            )
    return x, it, res


@dataclass
class ResidualReport:
    """Infinity norms of the three discrete equations, one entry per step."""

    phi_eq: np.ndarray
    mu_eq: np.ndarray
    w_eq: np.ndarray

    @property
    def max(self) -> float:
        return float(max(self.phi_eq.max(), self.mu_eq.max(), self.w_eq.max()))

    def per_step(self) -> np.ndarray:
        return np.max(np.stack([self.phi_eq, self.mu_eq, self.w_eq]), axis=0)


def residual_report(traj: StateTrajectory, u, f, params: PhysicalParams, spec: PotentialSpec) -> ResidualReport:
    """Re-evaluate the discrete equations on a stored trajectory.

    The potential is evaluated without clipping; a slice outside the domain
    of a singular potential yields an infinite residual.
    """
    grid, tgrid = traj.grid, traj.tgrid
    n, Nt, tau, L, p = grid.size, tgrid.steps, tgrid.tau, grid.laplacian, params
    phi = np.asarray(traj.phi).reshape(Nt + 1, n)
    mu = np.asarray(traj.mu).reshape(Nt + 1, n)
    w = np.asarray(traj.w).reshape(Nt + 1, n)
    v = np.asarray(traj.v).reshape(Nt + 1, n)
    u = grid.check_series(u, tgrid, "u").reshape(Nt + 1, n)
    f = grid.check_series(f, tgrid, "f").reshape(Nt + 1, n)
    r1, r2, r3 = np.zeros(Nt), np.zeros(Nt), np.zeros(Nt)
    for k in range(Nt):
        dphi = (phi[k + 1] - phi[k]) / tau
        g1 = dphi - L @ mu[k + 1] + p.gamma * phi[k + 1] - f[k + 1]
        try:
            beta = beta_part(spec, phi[k + 1], 1)
            g2 = mu[k + 1] + L @ phi[k + 1] - beta - pi_part(spec, phi[k], 1) - p.a + p.b * v[k + 1]
            r2[k] = np.max(np.abs(g2))
        except ValueError:
            r2[k] = np.inf
        g3 = (v[k + 1] - v[k]) / tau - L @ (p.kappa1 * v[k + 1] + p.kappa2 * w[k + 1]) + p.lam * dphi - u[k]
        g4 = w[k + 1] - w[k] - tau * v[k + 1]
        r1[k] = np.max(np.abs(g1))
        r3[k] = max(np.max(np.abs(g3)), np.max(np.abs(g4)) / tau)
    return ResidualReport(r1, r2, r3)
