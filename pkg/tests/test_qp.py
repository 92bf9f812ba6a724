import numpy as np
import pytest
from hypothesis import given, strategies as st

from gtwidl import qp
from gtwidl.exceptions import InvalidArgumentError, QPInfeasibleError, QPNonConvergenceError


def dual_projected_gradient(H, f, A, b, iters=20000):
    """Reference solver: accelerated projected gradient on the dual.

    max_{mu >= 0}  -0.5 (f + A'mu)' H^-1 (f + A'mu) - b'mu, then x = -H^-1 (f + A'mu).
    """
    Hinv = np.linalg.inv(H)
    if A.shape[0] == 0:
        return -Hinv @ f
    M = A @ Hinv @ A.T
    step = 1.0 / max(np.linalg.eigvalsh(M).max(), 1e-12)
    mu = y = np.zeros(A.shape[0])
    t = 1.0
    for _ in range(iters):
        grad = -A @ (Hinv @ (f + A.T @ y)) - b  # = A x(y) - b, the dual gradient
        mu_next = np.maximum(y + step * grad, 0.0)
        t_next = 0.5 * (1 + np.sqrt(1 + 4 * t * t))
        y = mu_next + (t - 1) / t_next * (mu_next - mu)
        if np.max(np.abs(mu_next - mu)) < 1e-15:
            mu = mu_next
            break
        mu, t = mu_next, t_next
    return -Hinv @ (f + A.T @ mu)


def random_problem(rng):
    s = int(rng.integers(1, 9))
    c = int(rng.integers(0, 13))
    M = rng.standard_normal((s, s))
    H = M @ M.T + 0.5 * np.eye(s)
    f = rng.standard_normal(s) * 3
    A = rng.standard_normal((c, s))
    x_feas = rng.standard_normal(s)
    b = A @ x_feas + rng.uniform(0.0, 1.0, c)
    return qp.QpProblem(H, f, A, b)


def test_unconstrained():
    res = qp.solve(qp.QpProblem(np.eye(2), [-1.0, -1.0]), regularize=False)
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-12)
    assert res.status == "optimal" and res.active == []


def test_single_active_bound():
    res = qp.solve(qp.QpProblem(np.eye(2), [-2.0, 0.0], [[1.0, 0.0]], [1.0]), regularize=False)
    np.testing.assert_allclose(res.x, [1.0, 0.0], atol=1e-12)
    assert res.active == [0]
    assert res.multipliers[0] == pytest.approx(1.0)


def test_random_instances_match_oracle_with_kkt_certificate():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        prob = random_problem(rng)
        res = qp.solve(prob)
        primal, station, dual, comp = qp.kkt_residuals(prob, res)
        assert primal <= 1e-9 and station <= 1e-8 and dual >= 0 and comp <= 1e-8
        ref = dual_projected_gradient(qp.regularized_hessian(prob.H), prob.f, prob.A, prob.b)
        ref_val = prob.value(ref)
        assert prob.value(res.x) <= ref_val + 1e-6 * (1 + abs(ref_val))
        assert prob.value(res.x) >= ref_val - 1e-6 * (1 + abs(ref_val))


def test_warm_start_working_set_reaches_same_point():
    rng = np.random.default_rng(7)
    for _ in range(30):
        prob = random_problem(rng)
        cold = qp.solve(prob)
        warm = qp.solve(prob, x0=cold.x, working_set=cold.active)
        np.testing.assert_allclose(warm.x, cold.x, atol=1e-8)


def test_psd_hessian_regularised():
    H = np.diag([1.0, 0.0])
    res = qp.solve(qp.QpProblem(H, [-1.0, -1.0], [[0.0, 1.0]], [2.0]))
    np.testing.assert_allclose(res.x, [1.0, 2.0], atol=1e-6)


def test_infeasible():
    A = np.array([[1.0], [-1.0]])
    with pytest.raises(QPInfeasibleError):
        qp.solve(qp.QpProblem(np.eye(1), [0.0], A, [-1.0, -1.0]))


def test_infeasible_start_rejected():
    with pytest.raises(QPInfeasibleError):
        qp.solve(qp.QpProblem(np.eye(1), [0.0], [[1.0]], [0.0]), x0=[1.0])


def test_iteration_cap():
    with pytest.raises(QPNonConvergenceError):
        qp.solve(qp.QpProblem(np.eye(2), [-1.0, -1.0]), max_iter=0)


def test_shape_validation():
    with pytest.raises(InvalidArgumentError):
        qp.QpProblem(np.eye(2), [1.0, 2.0, 3.0])
    with pytest.raises(InvalidArgumentError):
        qp.QpProblem([[1.0, 2.0], [0.0, 1.0]], [1.0, 2.0])
    with pytest.raises(InvalidArgumentError):
        qp.QpProblem(np.eye(2), [1.0, 2.0], [[1.0, 0.0]], [1.0, 2.0])


@given(st.integers(0, 10**6))
def test_box_constrained_matches_clipping(seed):
    # diagonal H with simple bounds: the optimum is the clipped Newton point
    rng = np.random.default_rng(seed)
    s = int(rng.integers(1, 7))
    d = rng.uniform(0.5, 3.0, s)
    f = rng.standard_normal(s) * 2
    lo, hi = -rng.uniform(0.1, 1.0, s), rng.uniform(0.1, 1.0, s)
    A = np.vstack([np.eye(s), -np.eye(s)])
    b = np.concatenate([hi, -lo])
    res = qp.solve(qp.QpProblem(np.diag(d), f, A, b), regularize=False)
    np.testing.assert_allclose(res.x, np.clip(-f / d, lo, hi), atol=1e-10)
