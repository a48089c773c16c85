import numpy as np
import pytest

from chcontrol.errors import ConformanceError, PreconditionError, StateSolveError
from chcontrol.geometry import Grid, TimeGrid, conv_forward, mean
from chcontrol.potentials import PotentialSpec
from chcontrol.state import (
    InitialData,
    NewtonConfig,
    PhysicalParams,
    StateTrajectory,
    residual_report,
    solve_state,
    temperature,
)

PARAMS = PhysicalParams()
REG = PotentialSpec("regular")


def zeros(g, tg):
    return np.zeros((tg.steps + 1,) + g.shape)


def smooth_run(dim=1, n=16, steps=12, spec=REG):
    g, tg = Grid.uniform(dim, 1.0, n), TimeGrid(0.3, steps)
    coords = g.coordinates()
    bump = np.prod([np.cos(np.pi * c) for c in coords], axis=0)
    t = tg.times.reshape((-1,) + (1,) * dim)
    u = np.sin(3 * t) * bump[None]
    f = 0.1 * np.cos(t) * np.ones(g.shape)[None]
    init = InitialData(0.3 * bump, 0.1 * bump, np.zeros(g.shape))
    return g, tg, u, f, init, solve_state(u, f, PARAMS, init, g, tg, spec)


def test_uniform_stationary_data_is_reproduced():
    g, tg = Grid.uniform(2, 1.0, 6), TimeGrid(1.0, 10)
    init = InitialData.constant(g, 0.3, 0.2, 0.7)
    traj = solve_state(zeros(g, tg), np.full((11,) + g.shape, 0.3), PARAMS, init, g, tg, REG)
    t = tg.times[:, None, None]
    assert np.max(np.abs(traj.phi - 0.3)) <= 1e-12
    assert np.max(np.abs(temperature(traj) - 0.7)) <= 1e-12
    assert np.max(np.abs(traj.w - (0.2 + 0.7 * t))) <= 1e-12


def test_mean_decays_geometrically_without_source():
    g, tg = Grid.uniform(1, 1.0, 32), TimeGrid(0.5, 20)
    (x,) = g.coordinates()
    init = InitialData(0.2 + 0.3 * np.cos(np.pi * x), np.zeros(32), np.zeros(32))
    u = np.sin(tg.times)[:, None] * np.cos(np.pi * x)[None]
    traj = solve_state(u, zeros(g, tg), PARAMS, init, g, tg, REG)
    means = np.array([mean(p, g) for p in traj.phi])
    exact = means[0] / (1 + tg.tau * PARAMS.gamma) ** np.arange(21)
    assert np.max(np.abs(means - exact)) <= 1e-12


def test_zero_data_gives_zero_temperature():
    g, tg = Grid.uniform(1, 1.0, 8), TimeGrid(1.0, 5)
    traj = solve_state(zeros(g, tg), zeros(g, tg), PARAMS, InitialData.constant(g), g, tg, REG)
    assert np.all(traj.v == 0)


def test_displacement_is_integrated_temperature():
    g, tg, u, f, init, traj = smooth_run()
    w = init.w0[None] + conv_forward(traj.v, tg, rule="right")
    np.testing.assert_allclose(traj.w, w, atol=1e-14)


@pytest.mark.parametrize("dim", [1, 2])
def test_residuals_below_newton_tolerance(dim):
    g, tg, u, f, init, traj = smooth_run(dim)
    rep = residual_report(traj, u, f, PARAMS, REG)
    assert rep.max <= NewtonConfig().tol
    assert traj.newton_residuals.max() <= NewtonConfig().tol


def test_residual_detects_perturbed_slice():
    g, tg, u, f, init, traj = smooth_run()
    phi = np.array(traj.phi)
    phi[5] += 1e-3
    bad = StateTrajectory(g, tg, phi, traj.mu, traj.w, traj.v)
    per_step = residual_report(bad, u, f, PARAMS, REG).per_step()
    assert per_step[4] >= 1e-4
    assert per_step[0] <= 1e-9


def test_zero_trajectory_residual_equals_source():
    g, tg = Grid.uniform(1, 1.0, 8), TimeGrid(1.0, 4)
    f = np.zeros((5, 8))
    f[1:, 3] = [0.5, -1.5, 2.0, 0.25]
    z = zeros(g, tg)
    traj = StateTrajectory(g, tg, z, z, z, z)
    rep = residual_report(traj, z, f, PARAMS, REG)
    np.testing.assert_allclose(rep.phi_eq, np.abs(f[1:, 3]))


def test_logarithmic_run_stays_inside():
    spec = PotentialSpec("logarithmic", c1=2.0)
    g, tg, u, f, init, traj = smooth_run(2, 12, 10, spec)
    assert -1 < traj.phi.min() and traj.phi.max() < 1
    rep = residual_report(traj, u, f, PARAMS, spec)
    assert rep.max <= 1e-10


def test_incompatible_log_data_rejected():
    spec = PotentialSpec("logarithmic", c1=2.0)
    g, tg = Grid.uniform(1, 1.0, 8), TimeGrid(1.0, 4)
    f = np.full((5, 8), 2.0)
    with pytest.raises(PreconditionError):
        solve_state(zeros(g, tg), f, PARAMS, InitialData.constant(g), g, tg, spec)


def test_trajectory_is_read_only():
    *_, traj = smooth_run()
    with pytest.raises(ValueError):
        traj.phi[0, 0] = 1.0


def test_validation():
    g, tg = Grid.uniform(1, 1.0, 8), TimeGrid(1.0, 4)
    with pytest.raises(PreconditionError):
        PhysicalParams(kappa1=0.0)
    with pytest.raises(ConformanceError):
        solve_state(np.zeros((4, 8)), zeros(g, tg), PARAMS, InitialData.constant(g), g, tg, REG)


def test_newton_failure_is_reported():
    g, tg, u, f, init, _ = smooth_run()
    with pytest.raises(StateSolveError) as err:
        solve_state(50 * u, f, PARAMS, init, g, tg, REG, NewtonConfig(max_iter=1))
    assert err.value.step == 0 and err.value.residual > 0
