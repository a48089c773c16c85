"""Linearized (forward) and adjoint (backward) solves around a state trajectory.

Two adjoint flavours are available:

``transpose``
    the exact transpose of the linearized time-stepping scheme.  The
    directional derivative of the *discrete* reduced cost is then
    ``<r + nu u, h>_Q`` to rounding error.  Adjoint slice n pairs with the
    state equations of step n -> n+1, so slice Nt carries the terminal data.
``continuous``
    the backward-in-time adjoint system discretized on its own by implicit
    Euler, with F'' evaluated at the current node.  Agrees with the transpose
    adjoint up to O(tau).

In both modes the memory term uses ``R = 1 (*) r`` with the update
``R[n] = R[n+1] + tau r[n]``, and the sign of that term is ``+kappa2``:
``-L(kappa1 r + kappa2 R)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import splu

from .errors import PreconditionError, SensitivityError
from .geometry import Grid, TimeGrid, conv_backward
from .potentials import PotentialSpec, beta_part, pi_part
from .state import PhysicalParams, StateTrajectory, _StepSystem

ADJOINT_MODES = ("transpose", "continuous")


def discrete_adjoint_mode(flag) -> str:
    """Normalize an adjoint-mode toggle.

    ``True``/``"transpose"`` select the exact discrete transpose, ``False``/
    ``"continuous"`` the independently discretized continuous adjoint.
    """
    if flag is True:
        return "transpose"
    if flag is False:
        return "continuous"
    if flag in ADJOINT_MODES:
        return flag
    raise PreconditionError(f"unknown adjoint mode {flag!r}; expected one of {ADJOINT_MODES}")


@dataclass
class CostData:
    """Weights and targets of the tracking-type cost functional."""

    alpha: tuple[float, float, float, float, float, float]
    nu: float
    phi_Q: np.ndarray
    w_Q: np.ndarray
    wdot_Q: np.ndarray
    phi_Omega: np.ndarray
    w_Omega: np.ndarray
    wdot_Omega: np.ndarray

    def __post_init__(self):
        self.alpha = tuple(float(a) for a in self.alpha)
        if len(self.alpha) != 6:
            raise PreconditionError("need exactly six tracking weights alpha1..alpha6")
        weights = self.alpha + (float(self.nu),)
        if any(not np.isfinite(a) or a < 0 for a in weights):
            raise PreconditionError(f"cost weights must be nonnegative, got {weights}")
        if not any(weights):
            raise PreconditionError("cost weights alpha1..alpha6, nu must not all vanish")

    @classmethod
    def zero_targets(cls, grid: Grid, tgrid: TimeGrid, alpha=(0,) * 6, nu: float = 0.0) -> "CostData":
        q = np.zeros((tgrid.steps + 1,) + grid.shape)
        o = np.zeros(grid.shape)
        return cls(tuple(alpha), nu, q, q.copy(), q.copy(), o, o.copy(), o.copy())

    def checked(self, grid: Grid, tgrid: TimeGrid) -> "CostData":
        for name in ("phi_Q", "w_Q", "wdot_Q"):
            grid.check_series(getattr(self, name), tgrid, name)
        for name in ("phi_Omega", "w_Omega", "wdot_Omega"):
            grid.check(getattr(self, name), name)
        return self


@dataclass
class LinearizedTrajectory:
    xi: np.ndarray
    eta: np.ndarray
    zeta: np.ndarray
    zdot: np.ndarray
    max_residual: float = 0.0


@dataclass
class AdjointTrajectory:
    p: np.ndarray
    q: np.ndarray
    r: np.ndarray
    R: np.ndarray
    f_r: np.ndarray
    mode: str = "transpose"
    max_residual: float = 0.0


def _dF_lin(spec: PotentialSpec, phi_new, mode: str):
    if mode == "transpose":
        return beta_part(spec, phi_new, 2)
    return beta_part(spec, phi_new, 2) + pi_part(spec, phi_new, 2)


def solve_linearized(
    h,
    base: StateTrajectory,
    params: PhysicalParams,
    spec: PotentialSpec,
    mode: str = "transpose",
) -> LinearizedTrajectory:
    """Solve the linearized system for the control direction ``h``.

    In transpose mode this is the exact derivative of the state scheme
    (beta'' at the new node, pi'' at the old one); in continuous mode F''
    is taken at the new node for both parts.
    """
    mode = discrete_adjoint_mode(mode)
    grid, tgrid = base.grid, base.tgrid
    h = grid.check_series(h, tgrid, "h")
    system = _StepSystem(grid, tgrid, params)
    n, tau, L, p, Nt = system.n, system.tau, system.L, params, tgrid.steps

    phi = np.asarray(base.phi).reshape(Nt + 1, n)
    hr = h.reshape(Nt + 1, n)
    xi = np.zeros((Nt + 1, n))
    eta = np.zeros((Nt + 1, n))
    zeta = np.zeros((Nt + 1, n))
    s = np.zeros((Nt + 1, n))
    worst = 0.0
    for k in range(Nt):
        J = system.jacobian(_dF_lin(spec, phi[k + 1], mode))
        rhs2 = pi_part(spec, phi[k], 2) * xi[k] if mode == "transpose" else np.zeros(n)
        rhs = np.concatenate([
            xi[k] / tau,
            rhs2,
            s[k] / tau + p.kappa2 * (L @ zeta[k]) + p.lam * xi[k] / tau + hr[k],
        ])
        x = splu(J).solve(rhs)
        worst = max(worst, _relative_residual(J, x, rhs))
        xi[k + 1], eta[k + 1], s[k + 1] = x[:n], x[n : 2 * n], x[2 * n :]
        zeta[k + 1] = zeta[k] + tau * s[k + 1]
    if worst > 1e-9:
        raise SensitivityError("linearized solve lost accuracy", residual=worst)
    shape = (Nt + 1,) + grid.shape
    return LinearizedTrajectory(xi.reshape(shape), eta.reshape(shape), zeta.reshape(shape), s.reshape(shape), worst)


def _relative_residual(A, x, b) -> float:
    scale = max(float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(A @ x - b))) / scale


def adjoint_source(base: StateTrajectory, cost: CostData, mode: str = "transpose") -> np.ndarray:
    """Right-hand side ``f_r`` of the r-equation, one slice per adjoint node."""
    tgrid = base.tgrid
    a = cost.alpha
    wmis = np.asarray(base.w) - cost.w_Q
    vmis = np.asarray(base.v) - cost.wdot_Q
    terminal = a[3] * (np.asarray(base.w)[-1] - cost.w_Omega)
    if mode == "transpose":
        # adjoint slice n pairs with state slice n+1
        memory = conv_backward(wmis, tgrid, rule="right")
        rate = np.concatenate([vmis[1:], vmis[-1:]])
    else:
        memory = conv_backward(wmis, tgrid, rule="left")
        rate = vmis
    return a[2] * memory + terminal[None] + a[4] * rate


def solve_adjoint(
    base: StateTrajectory,
    cost: CostData,
    params: PhysicalParams,
    spec: PotentialSpec,
    mode: str = "transpose",
) -> AdjointTrajectory:
    """Backward sweep for (p, q, r) from the terminal data at t = T."""
    mode = discrete_adjoint_mode(mode)
    grid, tgrid = base.grid, base.tgrid
    cost = cost.checked(grid, tgrid)
    system = _StepSystem(grid, tgrid, params)
    n, tau, L, p, Nt = system.n, system.tau, system.L, params, tgrid.steps
    a = cost.alpha

    flat = lambda arr: np.asarray(arr).reshape(-1, n)
    phi, v = flat(base.phi), flat(base.v)
    phi_mis = phi - flat(cost.phi_Q)
    f_r = flat(adjoint_source(base, cost, mode))

    P = np.zeros((Nt + 1, n))
    Qv = np.zeros((Nt + 1, n))
    r = np.zeros((Nt + 1, n))
    R = np.zeros((Nt + 1, n))
    rate_T = v[-1] - cost.wdot_Omega.ravel()
    r[Nt] = a[5] * rate_T
    P[Nt] = a[1] * (phi[-1] - cost.phi_Omega.ravel()) - p.lam * a[5] * rate_T
    Qv[Nt] = -(L @ P[Nt])

    sign = np.concatenate([np.ones(n), -np.ones(n), np.ones(n)])
    worst = 0.0
    for m in range(Nt - 1, -1, -1):
        if mode == "transpose":
            k = m + 1
            J = system.jacobian(beta_part(spec, phi[k], 2))
            rhs1 = a[0] * phi_mis[k] + P[m + 1] / tau + p.lam * r[m + 1] / tau
            if m < Nt - 1:
                rhs1 = rhs1 - pi_part(spec, phi[k], 2) * Qv[m + 1]
        else:
            J = system.jacobian(beta_part(spec, phi[m], 2) + pi_part(spec, phi[m], 2))
            rhs1 = a[0] * phi_mis[m] + P[m + 1] / tau + p.lam * r[m + 1] / tau
        rhs3 = f_r[m] + r[m + 1] / tau + p.kappa2 * (L @ R[m + 1])
        rhs = np.concatenate([rhs1, np.zeros(n), rhs3])
        # adjoint matrix = S J^T S with S = diag(I, -I, I)
        y = sign * splu(J).solve(sign * rhs, trans="T")
        worst = max(worst, _relative_residual(J.T, sign * y, sign * rhs))
        P[m], Qv[m], r[m] = y[:n], y[n : 2 * n], y[2 * n :]
        R[m] = R[m + 1] + tau * r[m]
    if worst > 1e-9:
        raise SensitivityError("adjoint solve lost accuracy", residual=worst)
    shape = (Nt + 1,) + grid.shape
    return AdjointTrajectory(
        P.reshape(shape), Qv.reshape(shape), r.reshape(shape), R.reshape(shape), f_r.reshape(shape), mode, worst
    )


def tracking_pairing(base: StateTrajectory, lin: LinearizedTrajectory, cost: CostData) -> float:
    """Directional derivative of the tracking terms along a linearized solution.

    Same quadrature as the cost: right-endpoint rule for the Q integrals,
    final slice for the terminal ones.
    """
    grid, tgrid = base.grid, base.tgrid
    a = cost.alpha
    wr = tgrid.weights("right") * grid.cell_volume
    dv = grid.cell_volume

    def q_term(mis, d):
        return float(np.dot(wr, (mis * d).reshape(len(d), -1).sum(axis=1)))

    def end_term(mis, d):
        return float(np.vdot(mis, d) * dv)

    phi, w, v = np.asarray(base.phi), np.asarray(base.w), np.asarray(base.v)
    return (
        a[0] * q_term(phi - cost.phi_Q, lin.xi)
        + a[1] * end_term(phi[-1] - cost.phi_Omega, lin.xi[-1])
        + a[2] * q_term(w - cost.w_Q, lin.zeta)
        + a[3] * end_term(w[-1] - cost.w_Omega, lin.zeta[-1])
        + a[4] * q_term(v - cost.wdot_Q, lin.zdot)
        + a[5] * end_term(v[-1] - cost.wdot_Omega, lin.zdot[-1])
    )
