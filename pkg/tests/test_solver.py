import types

import numpy as np
import pytest

from hierdot.errors import ValidationError
from hierdot.forward import DOTForward, MeasurementSet, OpticalField, add_noise
from hierdot.hypermodels import (
    DifferencePrior,
    Exponential,
    Fixed,
    InverseGamma,
    StandardGamma,
    UncorrelatedPrior,
)
from hierdot.mesh import boundary_patches, build_difference_structure, build_disk_mesh
from hierdot.mesh import chain_difference_structure
from hierdot.solver import (
    LinearForward,
    MAPProblem,
    SolverConfig,
    convergence_report,
    eval_objective,
    gauss_newton_solve,
    ias_run,
    solve_difference_mode,
    write_convergence_csv,
    write_iteration_log,
)

from oracles import chain_tv, fista_l1

FREE = SolverConfig(floors=None)


def linear_data(A, y, sigma):
    return types.SimpleNamespace(y=np.asarray(y, float), ce_diag=np.full(len(y), sigma**2))


# ---------------------------------------------------------------- objective


def test_objective_hyper_terms_only_at_exact_fit():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((6, 4))
    prior = UncorrelatedPrior((0.5,), (4,), (0.3,))
    x = np.full(4, 0.5)
    theta = np.full(4, 0.3)
    spec = StandardGamma(1e-2, 0.7)
    F = eval_objective(x, theta, linear_data(A, A @ x, 0.1), LinearForward(A), prior, spec, FREE)
    r = theta / 0.7
    assert F == pytest.approx(np.sum(r - 1e-2 * np.log(r)), rel=1e-14)


def test_fixed_objective_offset_is_half_log_theta():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((6, 4))
    y = rng.standard_normal(6)
    prior = UncorrelatedPrior((0.0,), (4,), (0.5,))
    x = rng.standard_normal(4)
    theta = np.full(4, 0.5)
    F = eval_objective(x, theta, linear_data(A, y, 0.2), LinearForward(A), prior, Fixed(), FREE)
    plain = 0.5 * np.sum((y - A @ x) ** 2) / 0.04 + 0.5 * np.sum(x**2) / 0.5
    assert F - plain == pytest.approx(0.5 * np.sum(np.log(theta)), rel=1e-12)


# ---------------------------------------------------------------- Gauss-Newton


def test_one_step_reaches_ridge_solution():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((30, 12))
    y = rng.standard_normal(30)
    sigma, mu = 0.1, 0.3
    theta = 10 ** rng.uniform(-2, 1, 12)
    prior = UncorrelatedPrior((mu,), (12,), (1.0,))
    cfg = SolverConfig(floors=None, max_inner=1)
    res = gauss_newton_solve(np.full(12, mu), theta, linear_data(A, y, sigma), LinearForward(A), prior, cfg)
    H = A.T @ A / sigma**2 + np.diag(1 / theta)
    direct = np.linalg.solve(H, A.T @ y / sigma**2 + mu / theta)
    assert np.abs(res.unknown - direct).max() <= 1e-10 * np.abs(direct).max()


def test_gn_stationary_at_data_consistent_point():
    mesh = build_disk_mesh(25.0, 6.0)
    layout = boundary_patches(mesh, 4, 4, 2.0, det_offset=np.pi / 4)
    fwd = DOTForward(mesh, layout)
    prior = UncorrelatedPrior.optical(mesh.n)
    x_star = prior.mean_vector()
    data = MeasurementSet(fwd.evaluate(x_star), 4, 4, ce_diag=np.full(32, 1e-4))
    theta = np.concatenate([np.full(mesh.n, 1e-6), np.full(mesh.n, 1e-2)])
    res = gauss_newton_solve(x_star, theta, data, fwd, prior)
    assert res.iterations == 1
    assert np.array_equal(res.unknown, x_star)


def test_missing_noise_variances_rejected():
    A = np.eye(2)
    data = types.SimpleNamespace(y=np.zeros(2), ce_diag=None)
    with pytest.raises(ValidationError, match="noise"):
        MAPProblem(data, LinearForward(A), UncorrelatedPrior((0.0,), (2,), (1.0,)), Fixed())


def test_start_below_floor_rejected():
    A = np.eye(2)
    prior = UncorrelatedPrior((0.01, 1.0), (1, 1), (1.0, 1.0))
    with pytest.raises(ValidationError, match="floor"):
        gauss_newton_solve(np.array([0.0, 1.0]), np.ones(2), linear_data(A, [0, 0], 1), LinearForward(A), prior)


# ---------------------------------------------------------------- IAS limits


def test_l1_limit_matches_proximal_oracle():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((20, 40))
    x_true = np.zeros(40)
    x_true[[3, 17, 29]] = [1.5, -2.0, 1.0]
    sigma = 0.05
    y = A @ x_true + sigma * rng.standard_normal(20)
    vartheta = 1e-3
    prior = UncorrelatedPrior((0.0,), (40,), (1.0,))
    cfg = SolverConfig(floors=None, max_outer=3000, eps_outer=1e-9)
    state = ias_run(linear_data(A, y, sigma), LinearForward(A), prior, StandardGamma(1e-8, vartheta), cfg)
    lam = np.sqrt(2 / vartheta)
    x_or = fista_l1(A, y, 1 / sigma**2, lam, 0.0)
    oracle = 0.5 * np.sum((y - A @ x_or) ** 2) / sigma**2 + lam * np.abs(x_or).sum()
    assert state.converged
    assert abs(state.F_history[-1] - oracle) <= 1e-3 * oracle


def test_tv_limit_on_chain_matches_proximal_oracle():
    rng = np.random.default_rng(6)
    n = 50
    A = rng.standard_normal((30, n)) / np.sqrt(n)
    x_true = np.where(np.arange(n) < 20, 1.0, 2.0)
    x_true[35:42] = 0.5
    sigma = 0.02
    y = A @ x_true + sigma * rng.standard_normal(30)
    vartheta, mu, gv = 1e-2, 1.0, 1.0
    ds = chain_difference_structure(n)
    prior = DifferencePrior((ds,), (mu,), (gv,), (1.0,))
    cfg = SolverConfig(floors=None, max_outer=3000, eps_outer=1e-9)
    state = ias_run(linear_data(A, y, sigma), LinearForward(A), prior, StandardGamma(1e-8, vartheta), cfg)

    _, oracle = chain_tv(A, y, sigma, vartheta, mu, gv)
    assert state.converged
    assert abs(state.F_history[-1] - oracle) <= 1e-3 * oracle


@pytest.mark.parametrize(
    "spec", [StandardGamma(1e-4, 1e-2), InverseGamma(1.5, 1e-3), Exponential(1e-4)], ids=lambda s: s.kind
)
def test_ias_objective_monotone_and_theta_bounded(spec):
    rng = np.random.default_rng(7)
    A = rng.standard_normal((15, 25))
    y = A @ np.where(rng.random(25) < 0.2, 1.0, 0.0) + 0.05 * rng.standard_normal(15)
    prior = UncorrelatedPrior((0.0,), (25,), (1.0,))
    lows = []
    state = ias_run(
        linear_data(A, y, 0.05),
        LinearForward(A),
        prior,
        spec,
        SolverConfig(floors=None, max_outer=200),
        callback=lambda s: lows.append(s.theta.min()),
    )
    assert np.all(np.isfinite(state.F_history))
    assert np.all(np.diff(state.F_history) <= 1e-10 * np.abs(state.F_history[1:]))
    bound = {"exponential": 1e-4, "standard-gamma": 1e-6, "inverse-gamma": 1e-3 / 3}[spec.kind]
    assert min(lows) >= bound * (1 - 1e-12)


def test_fixed_spec_is_single_solve():
    rng = np.random.default_rng(8)
    A = rng.standard_normal((10, 5))
    y = rng.standard_normal(10)
    data = linear_data(A, y, 0.3)
    prior = UncorrelatedPrior((0.0,), (5,), (0.4,))
    state = ias_run(data, LinearForward(A), prior, Fixed(), FREE)
    assert state.t == 1 and state.converged
    direct = gauss_newton_solve(np.zeros(5), np.full(5, 0.4), data, LinearForward(A), prior, FREE)
    assert np.array_equal(state.x, direct.unknown)


def test_ias_rejects_bad_initial_variances():
    A = np.eye(3)
    prior = UncorrelatedPrior((0.0,), (3,), (1.0,))
    with pytest.raises(ValidationError):
        ias_run(linear_data(A, np.zeros(3), 1), LinearForward(A), prior, Fixed(), FREE, theta0=np.zeros(3))


# ---------------------------------------------------------------- difference mode


@pytest.fixture(scope="module")
def difference_problem():
    mesh = build_disk_mesh(25.0, 5.0)
    layout = boundary_patches(mesh, 6, 6, 2.0, det_offset=np.pi / 6)
    fwd = DOTForward(mesh, layout)
    ds = build_difference_structure(mesh)
    mua = np.full(mesh.n, 0.01)
    mus = np.full(mesh.n, 1.0)
    inside = np.hypot(mesh.nodes[:, 0] + 5, mesh.nodes[:, 1] - 4) < 8
    mua[inside] = 0.015
    mus[inside] = 1.4
    x_star = OpticalField(mua, mus).stacked
    clean = MeasurementSet(fwd.evaluate(x_star), 6, 6)
    return mesh, fwd, ds, x_star, clean


def test_difference_mode_constraints_hold(difference_problem):
    mesh, fwd, ds, x_star, clean = difference_problem
    data = add_noise(clean, 0.004, seed=2)
    prior = DifferencePrior.optical(ds)
    problem = MAPProblem(data, fwd, prior, Fixed())
    res = solve_difference_mode(problem.default_start(), problem.initial_theta, data, fwd, prior)
    d = res.unknown
    x = problem.to_x(d)
    for k, eps in enumerate(problem.constraint_sigma):
        dk = d[k * ds.q : (k + 1) * ds.q]
        xk = x[k * mesh.n : (k + 1) * mesh.n]
        assert np.abs(ds.M @ dk).max() <= 10 * eps
        assert np.abs(ds.B @ xk - dk).max() <= 10 * eps


def test_difference_mode_exact_start_is_stationary(difference_problem):
    mesh, fwd, ds, x_star, clean = difference_problem
    data = MeasurementSet(clean.y, 6, 6, ce_diag=np.full(clean.y.size, 1e-6))
    # weak difference variances: the data-consistent start is (almost) the minimiser
    prior = DifferencePrior((ds, ds), (0.015, 1.4), (1.0, 100.0), (1.0, 100.0))
    problem = MAPProblem(data, fwd, prior, Fixed())
    d0 = np.concatenate([ds.B @ x_star[: mesh.n], ds.B @ x_star[mesh.n :]])
    gauge = np.concatenate([ds.gauge_mask, ds.gauge_mask])
    assert np.allclose(d0[gauge], [0.015, 1.4])
    res = solve_difference_mode(d0, problem.initial_theta, data, fwd, prior, SolverConfig(max_inner=1))
    step = problem.to_x(res.unknown) - x_star
    assert np.abs(step[: mesh.n]).max() < 1e-6 * 0.005
    assert np.abs(step[mesh.n :]).max() < 1e-6 * 0.4


def test_difference_mode_requires_difference_prior(difference_problem):
    mesh, fwd, ds, x_star, clean = difference_problem
    with pytest.raises(ValidationError):
        solve_difference_mode(x_star, np.ones(x_star.size), add_noise(clean, 0.01, 0), fwd, UncorrelatedPrior.optical(mesh.n))


# ---------------------------------------------------------------- reporting


def test_convergence_report_synthetic_rate():
    ref = np.zeros(3)
    iterates = [np.array([0.6**i, 0.0, 0.0]) for i in range(12)]
    pairs, rate = convergence_report(iterates, ref)
    assert pairs.shape == (11, 2)
    assert rate == pytest.approx(0.6, abs=1e-6)


def test_convergence_report_constant_sequence():
    iterates = [np.array([1.0, 2.0])] * 5
    _, rate = convergence_report(iterates, np.zeros(2))
    assert rate == pytest.approx(1.0)


def test_convergence_report_needs_three():
    with pytest.raises(ValidationError, match="3"):
        convergence_report([np.zeros(2), np.ones(2)], np.zeros(2))


def test_logs_written(tmp_path):
    rng = np.random.default_rng(9)
    A = rng.standard_normal((8, 6))
    prior = UncorrelatedPrior((0.0,), (6,), (1.0,))
    state = ias_run(
        linear_data(A, rng.standard_normal(8), 0.1),
        LinearForward(A),
        prior,
        StandardGamma(1e-3, 0.1),
        SolverConfig(floors=None, max_outer=5),
    )
    write_iteration_log(state, tmp_path / "it.csv")
    lines = (tmp_path / "it.csv").read_text().splitlines()
    assert lines[0] == "outer_iter,inner_iters,F,rel_change,wall_seconds"
    assert len(lines) == state.t + 1
    pairs, rate = convergence_report(state, state.x)
    write_convergence_csv(pairs, rate, tmp_path / "conv.csv")
    rows = (tmp_path / "conv.csv").read_text().splitlines()
    assert rows[0] == "iteration,error,next_error"
    assert rows[-1].startswith("rate,")
