import numpy as np
import pytest

from chcontrol.errors import PreconditionError
from chcontrol.geometry import Grid, TimeGrid, inner_q
from chcontrol.sensitivity import (
    CostData,
    discrete_adjoint_mode,
    solve_adjoint,
    solve_linearized,
    tracking_pairing,
)
from chcontrol.verification import (
    dense_gradient_oracle,
    duality_gap_check,
    random_directions,
    reference_directions,
    reference_problem,
)


@pytest.fixture(scope="module")
def problem():
    return reference_problem(1, 16, 16, 0.5)


@pytest.fixture(scope="module")
def base(problem):
    u, _ = reference_directions(problem)
    return problem.state(u)


def test_zero_direction(problem, base):
    lin = solve_linearized(problem.zeros(), base, problem.params, problem.spec)
    for arr in (lin.xi, lin.eta, lin.zeta, lin.zdot):
        assert np.all(arr == 0)


def test_linearity(problem, base):
    _, h = reference_directions(problem)
    one = solve_linearized(h, base, problem.params, problem.spec)
    two = solve_linearized(2 * h, base, problem.params, problem.spec)
    for a, b in ((one.xi, two.xi), (one.zeta, two.zeta), (one.zdot, two.zdot)):
        assert np.max(np.abs(b - 2 * a)) <= 1e-12 * max(1.0, np.max(np.abs(b)))


def test_difference_quotients_converge_linearly(problem):
    u, h = reference_directions(problem)
    base = problem.state(u)
    lin = solve_linearized(h, base, problem.params, problem.spec)
    errs = []
    for eps in (1e-1, 1e-2, 1e-3):
        pert = problem.state(u + eps * h)
        errs.append(np.max(np.abs((pert.phi - base.phi) / eps - lin.xi)) + np.max(np.abs((pert.w - base.w) / eps - lin.zeta)))
    slopes = np.log10(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all((slopes > 0.8) & (slopes < 1.2))


def test_no_tracking_means_zero_adjoint(problem, base):
    cd = CostData.zero_targets(problem.grid, problem.tgrid, (0,) * 6, nu=1.0)
    adj = solve_adjoint(base, cd, problem.params, problem.spec)
    for arr in (adj.p, adj.q, adj.r, adj.R):
        assert np.all(arr == 0)


def test_terminal_values(problem, base):
    cd, lam = problem.cost_data, problem.params.lam
    adj = solve_adjoint(base, cd, problem.params, problem.spec)
    a = cd.alpha
    p_T = a[1] * (base.phi[-1] - cd.phi_Omega) - lam * a[5] * (base.v[-1] - cd.wdot_Omega)
    r_T = a[5] * (base.v[-1] - cd.wdot_Omega)
    assert np.array_equal(adj.p[-1], p_T)
    assert np.array_equal(adj.r[-1], r_T)
    assert np.all(adj.R[-1] == 0)


@pytest.mark.parametrize("variant", ["regular", "logarithmic"])
def test_transpose_duality(variant):
    pr = reference_problem(2, 8, 8, 0.5, variant=variant)
    u, h = random_directions(pr, seed=4, scale=0.2)
    rep = duality_gap_check(pr, u, h)
    assert rep.passed, rep.summary()


def test_dense_oracle_small():
    pr = reference_problem(1, 8, 8, 0.5)
    u, _ = random_directions(pr, seed=5)
    rep = dense_gradient_oracle(pr, u)
    assert rep.passed, rep.summary()


def test_modes_agree_as_tau_shrinks():
    diffs = []
    for steps in (32, 128):
        pr = reference_problem(1, 16, steps, 0.5)
        u, _ = reference_directions(pr)
        base = pr.state(u)
        r_t = solve_adjoint(base, pr.cost_data, pr.params, pr.spec, "transpose").r
        r_c = solve_adjoint(base, pr.cost_data, pr.params, pr.spec, "continuous").r
        diffs.append(np.sqrt(inner_q(r_t - r_c, r_t - r_c, pr.grid, pr.tgrid)))
    assert diffs[1] < 0.5 * diffs[0]


def test_pairing_matches_for_all_alpha_zero(problem, base):
    cd = CostData.zero_targets(problem.grid, problem.tgrid, (0,) * 6, nu=1.0)
    _, h = reference_directions(problem)
    lin = solve_linearized(h, base, problem.params, problem.spec)
    assert tracking_pairing(base, lin, cd) == 0.0


def test_mode_flags():
    assert discrete_adjoint_mode(True) == "transpose"
    assert discrete_adjoint_mode(False) == "continuous"
    with pytest.raises(PreconditionError):
        discrete_adjoint_mode("exact")


def test_cost_data_validation():
    g, tg = Grid.uniform(1, 1.0, 4), TimeGrid(1.0, 2)
    with pytest.raises(PreconditionError):
        CostData.zero_targets(g, tg, (0,) * 6, nu=0.0)
    with pytest.raises(PreconditionError):
        CostData.zero_targets(g, tg, (1, -1, 0, 0, 0, 0), nu=0.0)
