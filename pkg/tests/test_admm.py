import numpy as np
import pytest
from scipy.optimize import linprog

from tgrasta import admm
from tgrasta.errors import DegenerateJacobian, DimensionMismatch, NonFinite
from tgrasta.grassmann import init_random


def planted(rng, n=200, d=3, p=6, k=10, seed=0):
    U = init_random(n, d, seed).basis
    J = rng.standard_normal((n, p)) * 0.1
    w = rng.standard_normal(d)
    dt = rng.standard_normal(p) * 0.1
    s = np.zeros(n)
    idx = rng.choice(n, k, replace=False)
    s[idx] = rng.standard_normal(k)
    return U, J, w, dt, s, U @ w - J @ dt + s


def lad_oracle(U, v, J):
    """min ||e||_1 s.t. v + J x = U w + e, as a linear program."""
    n, d = U.shape
    p = J.shape[1]
    A = np.hstack([-U, J, -np.eye(n), np.eye(n)])
    c = np.r_[np.zeros(d + p), np.ones(2 * n)]
    bounds = [(None, None)] * (d + p) + [(0, None)] * (2 * n)
    return linprog(c, A_eq=A, b_eq=-v, bounds=bounds, method="highs").fun


def test_soft_threshold_examples():
    assert np.array_equal(soft := admm.soft_threshold([3.0, -0.5, 0.2, -2.0], 1.0), [2.0, 0.0, 0.0, -1.0])
    assert soft.dtype == np.float64
    x = np.array([1.5, -2.0])
    assert np.array_equal(admm.soft_threshold(x, 0.0), x)
    with pytest.raises(ValueError):
        admm.soft_threshold(x, -1.0)


def test_residual_h_examples():
    U = np.eye(3)[:, :1]
    prob = admm.LinearizedProblem(U, np.array([1.0, 0.0, 0.0]), np.zeros((3, 2)))
    assert np.array_equal(admm.residual_h(prob, [1.0], np.zeros(3), np.zeros(2)), np.zeros(3))
    assert np.array_equal(admm.residual_h(prob, [0.0], np.zeros(3), np.zeros(2)), [-1.0, 0.0, 0.0])
    with pytest.raises(DimensionMismatch):
        admm.residual_h(prob, [0.0, 1.0], np.zeros(3), np.zeros(2))


def test_problem_dimension_check():
    with pytest.raises(DimensionMismatch):
        admm.LinearizedProblem(np.eye(4)[:, :2], np.zeros(3), np.zeros((4, 2)))
    with pytest.raises(DimensionMismatch):
        admm.LinearizedProblem(np.eye(4)[:, :2], np.zeros(4), np.zeros((3, 2)))


def test_precompute_factors(rng):
    U = init_random(30, 3, 1).basis
    J = rng.standard_normal((30, 4))
    P, F = admm.precompute_factors(admm.LinearizedProblem(U, rng.standard_normal(30), J))
    assert np.allclose(P @ U, np.eye(3), atol=1e-12)
    assert np.allclose(F @ J, np.eye(4), atol=1e-8)
    with pytest.raises(DegenerateJacobian):
        admm.precompute_factors(admm.LinearizedProblem(U, np.zeros(30), np.zeros((30, 4))))


def test_options_validation():
    for kw in [{"rho": 1.0}, {"eps_tol": 0.0}, {"max_iters": 0}, {"mu0": 0.0}, {"mu0": 10.0, "mu_max": 1.0}]:
        with pytest.raises(ValueError):
            admm.AdmmOptions(**kw)


def test_noiseless_instance_recovers_exactly(rng):
    U, J, w, dt, _, v = planted(rng, k=0)
    sol = admm.solve(admm.LinearizedProblem(U, v, J))
    assert sol.converged and sol.residual <= 1e-7
    assert np.abs(sol.e).max() <= 1e-7
    assert np.allclose(sol.w, w, atol=1e-6) and np.allclose(sol.delta_tau, dt, atol=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_planted_outliers_match_lad_oracle(seed):
    rng = np.random.default_rng(seed)
    U, J, w, dt, s, v = planted(rng, seed=seed)
    sol = admm.solve(admm.LinearizedProblem(U, v, J))
    assert sol.converged
    assert abs(np.abs(sol.e).sum() - lad_oracle(U, v, J)) <= 1e-6
    assert np.allclose(sol.e, s, atol=1e-6)
    assert np.allclose(sol.w, w, atol=1e-6) and np.allclose(sol.delta_tau, dt, atol=1e-6)


def test_point_already_in_subspace_needs_no_warp(rng):
    U = init_random(50, 2, 3).basis
    v = U @ np.array([0.6, 0.8])
    J = rng.standard_normal((50, 3))
    sol = admm.solve(admm.LinearizedProblem(U, v, J))
    assert np.abs(sol.delta_tau).max() <= 1e-7 and np.abs(sol.e).max() <= 1e-7


def test_deterministic(rng):
    U, J, _, _, _, v = planted(rng)
    a = admm.solve(admm.LinearizedProblem(U, v, J))
    b = admm.solve(admm.LinearizedProblem(U, v, J))
    for name in ("w", "e", "delta_tau", "lam"):
        assert np.array_equal(getattr(a, name), getattr(b, name))
    assert a.mu_final == b.mu_final and a.iterations == b.iterations


def test_penalty_schedule(rng):
    U, J, _, _, _, v = planted(rng)
    opts = admm.AdmmOptions(max_iters=4, rho=3.0, mu0=0.5)
    sol = admm.solve(admm.LinearizedProblem(U, v, J), opts)
    assert sol.iterations == 4 and not sol.converged
    assert sol.mu_final == pytest.approx(0.5 * 3.0 ** 3)
    capped = admm.solve(admm.LinearizedProblem(U, v, J), admm.AdmmOptions(max_iters=30, mu_max=8.0))
    assert capped.mu_final <= 8.0


def test_residual_shrinks_with_more_iterations(rng):
    U, J, _, _, _, v = planted(rng)
    res = [admm.solve(admm.LinearizedProblem(U, v, J), admm.AdmmOptions(max_iters=k)).residual
           for k in (2, 6, 12)]
    assert res[0] > res[1] > res[2]


def test_degenerate_jacobian_is_flagged(rng):
    U = init_random(20, 2, 0).basis
    v = rng.standard_normal(20)
    sol = admm.solve(admm.LinearizedProblem(U, v, np.zeros((20, 3))))
    assert sol.degenerate and np.array_equal(sol.delta_tau, np.zeros(3))
    assert sol.converged


def test_non_finite_input_raises():
    U = init_random(10, 2, 0).basis
    v = np.full(10, np.nan)
    with pytest.raises(NonFinite):
        admm.solve(admm.LinearizedProblem(U, v, np.ones((10, 2))))
