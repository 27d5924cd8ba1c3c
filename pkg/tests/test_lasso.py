import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from imucs.lasso import (LassoConfig, lasso_objective, lp_norm, soft_threshold, solve, solve_batch)


def _orthogonal(n, seed):
    q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, n)))
    return q


def test_soft_threshold_values():
    np.testing.assert_array_equal(soft_threshold(np.array([-3.0, -0.5, 0.0, 0.5, 3.0]), 1.0),
                                  [-2.0, 0.0, 0.0, 0.0, 2.0])


def test_lp_norm():
    assert lp_norm([3.0, -4.0], 2) == 5.0
    assert lp_norm([3.0, -4.0], 1) == 7.0
    with pytest.raises(ValueError):
        lp_norm([1.0], 0.5)


def test_identity_design_closed_form():
    # A = I: minimizer of (x - y)^2 + lam |x| is soft(y, lam / 2)
    y = np.array([1.0, -0.2, 0.01, -0.004, 0.0])
    lam = 0.02
    sol = solve(np.eye(5), y, LassoConfig(lam=lam))
    np.testing.assert_allclose(sol.x_hat, [0.99, -0.19, 0.0, 0.0, 0.0], atol=1e-12)
    assert sol.converged


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_orthogonal_design_closed_form(seed):
    n = 30
    A = _orthogonal(n, seed)
    y = np.random.default_rng(seed + 10).standard_normal(n)
    lam = 0.3
    sol = solve(A, y, LassoConfig(lam=lam, tol=1e-12, max_iter=5000))
    expected = soft_threshold(A.T @ y, lam / 2)
    np.testing.assert_allclose(sol.x_hat, expected, atol=1e-6, rtol=0)


def test_objective_trace_monotone():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((20, 50)) / np.sqrt(20)
    y = rng.standard_normal(20)
    sol = solve(A, y, LassoConfig(lam=1e-3, max_iter=300), trace=True)
    tr = sol.objective_trace
    assert len(tr) == sol.iterations + 1
    assert tr[0] == pytest.approx(float(y @ y))
    assert np.all(np.diff(tr) <= 1e-12 * tr[:-1])


def test_zero_measurement_gives_zero():
    sol = solve(np.random.default_rng(0).standard_normal((4, 8)), np.zeros(4))
    assert np.all(sol.x_hat == 0) and sol.converged and sol.iterations == 1


def test_huge_lambda_shrinks_to_zero():
    rng = np.random.default_rng(1)
    sol = solve(rng.standard_normal((6, 9)), rng.standard_normal(6), LassoConfig(lam=1e6))
    assert np.all(sol.x_hat == 0)


def test_zero_column_stays_zero():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((8, 10))
    A[:, 3] = 0
    sol = solve(A, rng.standard_normal(8), LassoConfig(lam=1e-3))
    assert sol.x_hat[3] == 0


def test_iteration_cap_reported():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((10, 40))
    sol = solve(A, rng.standard_normal(10), LassoConfig(lam=1e-8, max_iter=3, tol=1e-15))
    assert sol.iterations == 3 and not sol.converged


def test_tau_report():
    sol = solve(np.eye(3), np.array([1.0, 0.0, -2.0]), LassoConfig(lam=0.0, tau_report=True))
    assert sol.l1_norm == pytest.approx(3.0)
    assert solve(np.eye(3), np.ones(3)).l1_norm is None


def test_input_validation():
    with pytest.raises(ValueError):
        solve(np.eye(3), np.ones(4))
    with pytest.raises(ValueError):
        solve(np.eye(3), np.array([1.0, np.nan, 0.0]))
    with pytest.raises(ValueError):
        LassoConfig(lam=-1)
    with pytest.raises(ValueError):
        solve_batch(np.eye(3), np.ones((2, 3)), mode="nope")


def test_batch_modes_agree_with_single_solves():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((30, 60)) / np.sqrt(30)
    Y = rng.standard_normal((7, 30))
    cfg = LassoConfig(lam=1e-3, max_iter=200)
    Xb, ib, cb = solve_batch(A, Y, cfg, mode="blocked")
    Xs, is_, cs = solve_batch(A, Y, cfg, mode="sequential")
    single = np.stack([solve(A, y, cfg).x_hat for y in Y])
    np.testing.assert_allclose(Xb, single, atol=1e-11)
    np.testing.assert_allclose(Xs, single, atol=1e-11)
    np.testing.assert_array_equal(ib, is_)


def test_kkt_conditions_at_solution():
    # independent optimality check: 2 A^T (y - A x) = lam sign(x) on the
    # support and |2 A^T (y - A x)| <= lam off it
    rng = np.random.default_rng(5)
    A = rng.standard_normal((15, 25))
    y = rng.standard_normal(15)
    lam = 0.5
    x = solve(A, y, LassoConfig(lam=lam, tol=1e-12, max_iter=20000)).x_hat
    g = 2 * A.T @ (y - A @ x)
    on = x != 0
    np.testing.assert_allclose(g[on], lam * np.sign(x[on]), atol=1e-6)
    assert np.all(np.abs(g[~on]) <= lam + 1e-6)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12), st.floats(1e-4, 1.0))
def test_solution_not_worse_than_start(seed, m, lam):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, 2 * m))
    y = rng.standard_normal(m)
    sol = solve(A, y, LassoConfig(lam=lam, max_iter=50))
    assert sol.objective <= lasso_objective(A, np.zeros(2 * m), y, lam) + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(1e-3, 2.0))
def test_orthogonal_closed_form_property(seed, lam):
    A = _orthogonal(8, seed)
    y = np.random.default_rng(seed + 1).standard_normal(8)
    x = solve(A, y, LassoConfig(lam=lam, tol=1e-13, max_iter=5000)).x_hat
    np.testing.assert_allclose(x, soft_threshold(A.T @ y, lam / 2), atol=1e-6)
